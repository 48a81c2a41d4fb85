"""Adjacent-frame consistency and intensity obedience reports."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import torch
from scipy.stats import spearmanr

from animkit.conditioning import PatchEncoder
from animkit.intensity import BucketTable, intensity_to_level, motion_intensity
from animkit.media_io import VideoClip


@torch.no_grad()
def frame_consistency(clip: VideoClip, backbone: PatchEncoder) -> float:
    """Mean cosine similarity between mean-pooled patch tokens of adjacent frames."""
    if clip.n_frames < 2:
        raise ValueError("need at least two frames")
    feats = backbone(torch.as_tensor(clip.frames, dtype=torch.float64).to(backbone.embed.weight.dtype)).mean(dim=1)
    feats = feats.double()
    cos = torch.nn.functional.cosine_similarity(feats[:-1], feats[1:], dim=-1)
    return float(cos.clamp(-1.0, 1.0).mean())


def _spearman(a, b) -> float | None:
    if len(a) < 2 or np.all(np.asarray(a) == a[0]) or np.all(np.asarray(b) == b[0]):
        return None
    value = spearmanr(a, b).statistic
    return None if math.isnan(value) else float(value)


def intensity_obedience(clips, table: BucketTable, backbone: PatchEncoder | None = None, ids=None) -> dict:
    """``clips`` is a sequence of (VideoClip, requested level)."""
    per_clip = []
    for i, (clip, requested) in enumerate(clips):
        value = motion_intensity(clip)
        level = intensity_to_level(value, table)
        row = {
            "id": str(ids[i]) if ids is not None else str(i),
            "intensity": value,
            "level": level,
            "requested": int(requested),
            "abs_error": abs(level - int(requested)),
            "consistency": frame_consistency(clip, backbone) if backbone is not None else None,
        }
        per_clip.append(row)
    requested = [r["requested"] for r in per_clip]
    measured = [r["level"] for r in per_clip]
    consistencies = [r["consistency"] for r in per_clip if r["consistency"] is not None]
    aggregate = {
        "mean_abs_error": float(np.mean([r["abs_error"] for r in per_clip])) if per_clip else None,
        "spearman": _spearman(requested, measured),
        "mean_consistency": float(np.mean(consistencies)) if consistencies else None,
    }
    return {"per_clip": per_clip, "aggregate": aggregate}


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
