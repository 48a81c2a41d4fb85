import numpy as np
import pytest
import torch

from animkit.conditioning import (
    FRAME,
    INTENSITY,
    NOISE,
    REFERENCE,
    Autoencoder,
    ConditioningError,
    PatchEncoder,
    assemble_input,
    decode_latent,
    encode_reference,
    extract_visual_tokens,
    frame_embedding,
)
from animkit.media_io import StillImage


@pytest.fixture
def codec():
    torch.manual_seed(0)
    return Autoencoder(width=16).eval()


def test_encode_shape_and_determinism(codec, rng):
    image = StillImage(rng.uniform(0, 1, (3, 32, 32)))
    a = encode_reference(image, codec)
    assert a.shape == (4, 8, 8)
    assert torch.equal(a, encode_reference(image, codec))
    with pytest.raises(ConditioningError):
        encode_reference(StillImage(rng.uniform(0, 1, (3, 30, 32))), codec)


def test_decode_shape_and_clamp(codec):
    out = decode_latent(torch.randn(4, 8, 8) * 50, codec)
    assert out.pixels.shape == (3, 32, 32)
    assert out.pixels.min() >= 0 and out.pixels.max() <= 1
    with pytest.raises(ConditioningError):
        decode_latent(torch.full((4, 8, 8), float("nan")), codec)


def test_frame_embedding_values():
    emb = frame_embedding(16, 2, 3)
    assert emb.shape == (16, 1, 2, 3)
    assert torch.all(emb[0] == 0.0) and torch.all(emb[15] == 1.0)
    assert emb[5, 0, 0, 0].item() == pytest.approx(5 / 15)
    means = emb.flatten(1).mean(1)
    assert torch.all(means[1:] > means[:-1])
    assert torch.all(emb.flatten(1) == emb.flatten(1)[:, :1])
    assert torch.all(frame_embedding(1, 4, 4) == 0)


def test_patch_encoder_tokens_and_freeze():
    enc = PatchEncoder(patch=8, dim=64, image_size=32)
    images = torch.rand(2, 3, 32, 32)
    assert enc(images).shape == (2, 16, 64)
    assert not any(p.requires_grad for p in enc.parameters())
    assert torch.equal(enc(images), PatchEncoder(patch=8, dim=64, image_size=32)(images))
    with pytest.raises(ConditioningError):
        enc(torch.rand(1, 3, 16, 16))


def test_zero_projection_gives_zero_tokens():
    enc = PatchEncoder()
    proj = torch.nn.Linear(64, 64)
    torch.nn.init.zeros_(proj.weight)
    torch.nn.init.zeros_(proj.bias)
    assert torch.all(extract_visual_tokens(torch.rand(1, 3, 32, 32), enc, proj) == 0)


def test_assemble_layout(rng):
    b, f, h, w = 2, 5, 4, 6
    noise = torch.randn(b, f, 4, h, w, dtype=torch.float64)
    ref = torch.randn(b, 4, h, w, dtype=torch.float64)
    out = assemble_input(noise, ref, [5, 9], f)
    assert out.shape == (b, f, 10, h, w)
    assert torch.equal(out[:, :, NOISE], noise)
    for n in range(f):
        assert torch.equal(out[:, n, REFERENCE], ref)
        assert torch.all(out[:, n, FRAME] == n / (f - 1))
    assert torch.all(out[0, :, INTENSITY] == 0.5)
    assert torch.all(out[1, :, INTENSITY] == 0.9)
    assert torch.all(out[:, 0, FRAME] == 0)


def test_assemble_shared_reference_and_errors():
    noise = torch.randn(1, 3, 4, 2, 2)
    ref = torch.randn(4, 2, 2)
    out = assemble_input(noise, ref, 5, 3)
    assert torch.equal(out[0, 0, REFERENCE], ref) and torch.equal(out[0, 2, REFERENCE], ref)
    with pytest.raises(ConditioningError):
        assemble_input(noise, torch.randn(4, 3, 3), 5, 3)
    with pytest.raises(ConditioningError):
        assemble_input(noise, ref, 5, 4)
    with pytest.raises(ValueError):
        assemble_input(noise, ref, 11, 3)
