"""Checkpoint directory: manifest.json + params.bin + buckets.json + vocab.json + config.json.

``params.bin`` is every state-dict tensor as raw little-endian float32,
concatenated in manifest order. The manifest records name, group, shape,
dtype, byte offset and byte length for each tensor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from animkit.config import TrainConfig
from animkit.diffusion import NoiseSchedule, make_schedule
from animkit.intensity import BucketTable
from animkit.model import AnimationModel, parameter_partition
from animkit.text import load_vocab, save_vocab

FORMAT_VERSION = 1
DTYPE = "<f4"


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    model: AnimationModel
    config: TrainConfig
    schedule: NoiseSchedule
    buckets: BucketTable | None
    vocab: dict
    metrics: dict | None = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().astype(DTYPE) for k, v in self.model.state_dict().items()}


def _groups(model: AnimationModel) -> dict[str, str]:
    frozen, trainable = parameter_partition(model)
    groups = {n: "frozen" for n in frozen}
    groups.update({n: "trainable" for n in trainable})
    # Buffers are fixed by construction or set once during pretraining.
    for name, _ in model.named_buffers():
        groups[name] = "frozen"
    return groups


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    groups = _groups(ckpt.model)
    entries = []
    offset = 0
    with open(path / "params.bin", "wb") as fh:
        for name, tensor in ckpt.model.state_dict().items():
            blob = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype=DTYPE).tobytes()
            entries.append(
                {"name": name, "group": groups[name], "shape": list(tensor.shape), "dtype": "float32",
                 "offset": offset, "nbytes": len(blob)}
            )
            fh.write(blob)
            offset += len(blob)
    manifest = {
        "format_version": FORMAT_VERSION,
        "byte_order": "little",
        "total_bytes": offset,
        "schedule": ckpt.schedule.to_json(),
        "tensors": entries,
    }
    if ckpt.metrics:
        manifest["metrics"] = ckpt.metrics
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    ckpt.config.save(path / "config.json")
    save_vocab(ckpt.vocab, path / "vocab.json")
    buckets_path = path / "buckets.json"
    if ckpt.buckets is not None:
        ckpt.buckets.save(buckets_path)
    elif buckets_path.exists():
        buckets_path.unlink()
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    for required in ("manifest.json", "params.bin", "config.json", "vocab.json"):
        if not (path / required).is_file():
            raise CheckpointError(f"checkpoint {path} is missing {required}")
    manifest = json.loads((path / "manifest.json").read_text())
    config = TrainConfig.load(path / "config.json")
    vocab = load_vocab(path / "vocab.json")
    blob = (path / "params.bin").read_bytes()
    if len(blob) != manifest["total_bytes"]:
        raise CheckpointError(f"params.bin has {len(blob)} bytes, manifest says {manifest['total_bytes']}")

    model = AnimationModel(config, vocab)
    expected = model.state_dict()
    state = {}
    for entry in manifest["tensors"]:
        name = entry["name"]
        if name not in expected:
            raise CheckpointError(f"unexpected tensor {name}")
        shape = tuple(entry["shape"])
        if shape != tuple(expected[name].shape):
            raise CheckpointError(f"{name}: manifest shape {shape} != model shape {tuple(expected[name].shape)}")
        count = int(np.prod(shape, dtype=np.int64))
        if entry["nbytes"] != 4 * count:
            raise CheckpointError(f"{name}: byte length {entry['nbytes']} does not match shape {shape}")
        array = np.frombuffer(blob, dtype=DTYPE, count=count, offset=entry["offset"]).reshape(shape)
        state[name] = torch.from_numpy(array.astype(np.float32))
    missing = set(expected) - set(state)
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors: {sorted(missing)[:5]}")
    model.load_state_dict(state)
    model.eval()

    buckets_path = path / "buckets.json"
    buckets = BucketTable.load(buckets_path) if buckets_path.is_file() else None
    schedule = make_schedule(**{k: manifest["schedule"][k] for k in ("T", "beta_start", "beta_end")})
    return Checkpoint(model, config, schedule, buckets, vocab, manifest.get("metrics"))
