"""Procedural moving-shape clips with prompts built from a fixed template.

Shapes are rendered with signed-distance coverage, which gives one pixel of
anti-aliasing and keeps the coverage centroid within a fraction of a pixel of
the true shape center.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from animkit.media_io import VideoClip, save_clip

SHAPES = ("square", "circle", "triangle")
COLORS = {
    "red": (0.9, 0.1, 0.1),
    "green": (0.1, 0.8, 0.2),
    "blue": (0.15, 0.25, 0.95),
    "yellow": (0.95, 0.9, 0.1),
    "purple": (0.6, 0.2, 0.8),
    "orange": (0.95, 0.55, 0.1),
}
MOTIONS = ("moves_left", "moves_right", "moves_up", "moves_down", "rotates", "grows", "shrinks", "stays_still")
MOTION_PHRASES = {
    "moves_left": "moves left",
    "moves_right": "moves right",
    "moves_up": "moves up",
    "moves_down": "moves down",
    "rotates": "rotates",
    "grows": "grows",
    "shrinks": "shrinks",
    "stays_still": "stays still",
}
ADVERBS = ("slowly", "", "quickly")
TRANSLATIONS = {"moves_left": (-1, 0), "moves_right": (1, 0), "moves_up": (0, -1), "moves_down": (0, 1)}

DARK_BACKGROUND = (0.12, 0.12, 0.12)
LIGHT_BACKGROUND = (0.85, 0.85, 0.85)

MOTION_WORDS = frozenset(w for phrase in MOTION_PHRASES.values() for w in phrase.split()) | {"slowly", "quickly"}
CONTENT_WORDS = frozenset(COLORS) | frozenset(SHAPES)


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class MotionSpec:
    """``speed`` is px/frame for translations, degrees/frame for ``rotates``
    and a fraction of the initial size per frame for ``grows``/``shrinks``."""

    shape: str
    color: str
    motion: str
    speed: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.color not in COLORS:
            raise ValueError(f"unknown color {self.color!r}")
        if self.motion not in MOTIONS:
            raise ValueError(f"unknown motion {self.motion!r}")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if (self.motion == "stays_still") != (self.speed == 0):
            raise ValueError("stays_still requires speed 0 and every other motion a positive speed")


def luma(rgb) -> float:
    r, g, b = rgb
    return 0.299 * r + 0.587 * g + 0.114 * b


def background_for(color: str) -> tuple:
    return DARK_BACKGROUND if luma(COLORS[color]) > 0.5 else LIGHT_BACKGROUND


def make_prompt(spec: MotionSpec, adverb: str = "") -> str:
    words = ["the", spec.color, spec.shape, MOTION_PHRASES[spec.motion]]
    if adverb and spec.motion != "stays_still":
        words.append(adverb)
    return " ".join(words)


def _polygon(shape: str, radius: float, angle: float) -> np.ndarray | None:
    if shape == "circle":
        return None
    if shape == "square":
        base = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64) * radius
    else:
        # Equilateral, apex up, circumradius ``radius``.
        angles = np.deg2rad([-90.0, 30.0, 150.0])
        base = np.stack([np.cos(angles), np.sin(angles)], axis=1) * radius
    c, s = math.cos(angle), math.sin(angle)
    return base @ np.array([[c, s], [-s, c]])


def _signed_distance(shape: str, cx: float, cy: float, radius: float, angle: float, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    px, py = xs - cx, ys - cy
    if shape == "circle":
        return np.hypot(px, py) - radius
    verts = _polygon(shape, radius, angle)
    dist = np.full(px.shape, -np.inf)
    n = len(verts)
    # Vertices run clockwise on screen (y down), so the outward normal of edge
    # a->b is (dy, -dx) after normalization.
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        edge = b - a
        normal = np.array([edge[1], -edge[0]]) / np.hypot(*edge)
        if np.dot(normal, a) < 0:
            normal = -normal
        dist = np.maximum(dist, (px - a[0]) * normal[0] + (py - a[1]) * normal[1])
    return dist


def render_frame(shape: str, color: str, cx: float, cy: float, radius: float, angle: float, size: int) -> np.ndarray:
    coverage = np.clip(0.5 - _signed_distance(shape, cx, cy, radius, angle, size), 0.0, 1.0)
    fg = np.asarray(COLORS[color]).reshape(3, 1, 1)
    bg = np.asarray(background_for(color)).reshape(3, 1, 1)
    return bg + (fg - bg) * coverage[None]


def _extent(shape: str, radius: float, rotating: bool) -> float:
    if shape == "square":
        return radius * math.sqrt(2.0) if rotating else radius
    return radius


def trajectory(spec: MotionSpec, n_frames: int, radius: float):
    """Per-frame (dx, dy, radius, angle) relative to the start center."""
    steps = np.arange(n_frames, dtype=np.float64)
    dx = np.zeros(n_frames)
    dy = np.zeros(n_frames)
    radii = np.full(n_frames, radius)
    angles = np.zeros(n_frames)
    if spec.motion in TRANSLATIONS:
        ux, uy = TRANSLATIONS[spec.motion]
        dx, dy = ux * spec.speed * steps, uy * spec.speed * steps
    elif spec.motion == "rotates":
        angles = np.deg2rad(spec.speed * steps)
    elif spec.motion == "grows":
        radii = radius * (1.0 + spec.speed * steps)
    elif spec.motion == "shrinks":
        radii = radius * (1.0 - spec.speed * steps)
    return dx, dy, radii, angles


def generate_clip(spec: MotionSpec, n_frames: int, size: int, seed: int, adverb: str = "") -> tuple[VideoClip, str]:
    """Render ``spec`` for ``n_frames`` frames; ``seed`` picks object size and start position."""
    if n_frames < 2:
        raise ValueError("n_frames must be at least 2")
    if size < 16:
        raise ValueError("size must be at least 16")
    if spec.motion in TRANSLATIONS and spec.speed > size / 4:
        raise TrajectoryError(f"speed {spec.speed} exceeds size/4 per frame")
    rng = np.random.default_rng(seed)
    radius = size * rng.uniform(0.12, 0.18)
    dx, dy, radii, angles = trajectory(spec, n_frames, radius)
    if radii.min() < 1.0:
        raise TrajectoryError("trajectory out of bounds: object shrinks below one pixel")
    extent = max(_extent(spec.shape, r, spec.motion == "rotates") for r in radii) + 1.0

    # Feasible start centers keep every frame's bounding box inside the canvas.
    lo_x, hi_x = extent - dx.min(), size - extent - dx.max()
    lo_y, hi_y = extent - dy.min(), size - extent - dy.max()
    if lo_x > hi_x or lo_y > hi_y:
        raise TrajectoryError("trajectory out of bounds")
    cx, cy = rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)

    frames = np.stack(
        [render_frame(spec.shape, spec.color, cx + dx[i], cy + dy[i], radii[i], angles[i], size) for i in range(n_frames)]
    )
    return VideoClip(frames), make_prompt(spec, adverb)


@dataclass
class DatasetConfig:
    per_class: int | dict = 10
    speed_range: tuple = (0.25, 2.5)
    frames: int = 8
    size: int = 32
    seed: int = 0
    adverbs: bool = True
    motions: tuple = MOTIONS


@dataclass
class DatasetEntry:
    clip: str
    prompt: str
    spec: MotionSpec
    speed_px: float
    seed: int

    def to_json(self) -> dict:
        return {"clip": self.clip, "prompt": self.prompt, "spec": asdict(self.spec), "speed_px": self.speed_px, "seed": self.seed}

    @classmethod
    def from_json(cls, data: dict) -> "DatasetEntry":
        return cls(data["clip"], data["prompt"], MotionSpec(**data["spec"]), float(data["speed_px"]), int(data["seed"]))


@dataclass
class DatasetManifest:
    root: Path
    seed: int
    entries: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    FILENAME = "dataset_manifest.json"

    def __len__(self):
        return len(self.entries)

    def clip_path(self, entry: DatasetEntry) -> Path:
        return self.root / entry.clip

    def save(self) -> Path:
        path = self.root / self.FILENAME
        payload = {"seed": self.seed, "config": self.config, "entries": [e.to_json() for e in self.entries]}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        root = Path(root)
        path = root / cls.FILENAME
        if not path.is_file():
            raise FileNotFoundError(f"no {cls.FILENAME} in {root}")
        payload = json.loads(path.read_text())
        entries = [DatasetEntry.from_json(e) for e in payload["entries"]]
        return cls(root, int(payload["seed"]), entries, payload.get("config", {}))


def native_speed(motion: str, speed_px: float, size: int) -> float:
    """Convert a boundary speed in px/frame to the unit used by ``motion``."""
    if motion in TRANSLATIONS:
        return speed_px
    if motion == "rotates":
        # A vertex at the mean object radius travels ~speed_px per frame.
        return math.degrees(speed_px / (0.15 * size))
    return speed_px / size


def _adverb(speed_px: float, lo: float, hi: float) -> str:
    if hi <= lo:
        return ""
    third = (hi - lo) / 3.0
    return ADVERBS[min(int((speed_px - lo) // third), 2)]


def generate_dataset(config: DatasetConfig, out_dir) -> DatasetManifest:
    """Write clips under ``out_dir/clips`` and return the saved manifest."""
    out_dir = Path(out_dir)
    counts = config.per_class if isinstance(config.per_class, dict) else {m: config.per_class for m in config.motions}
    if not counts or any(int(n) < 1 for n in counts.values()):
        raise ValueError("need at least one clip per requested class")
    lo, hi = (float(v) for v in config.speed_range)
    if lo < 0 or hi < lo:
        raise ValueError(f"invalid speed range {config.speed_range}")

    manifest = DatasetManifest(out_dir, int(config.seed), config={**asdict(config), "per_class": counts})
    index = 0
    for motion in MOTIONS:
        for _ in range(int(counts.get(motion, 0))):
            rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), index]))
            color = str(rng.choice(sorted(COLORS)))
            shapes = ("square", "triangle") if motion == "rotates" else SHAPES
            shape = str(rng.choice(shapes))
            speed_px = 0.0 if motion == "stays_still" else float(rng.uniform(lo, hi))
            actual = motion if speed_px > 0 else "stays_still"
            spec = MotionSpec(shape, color, actual, native_speed(actual, speed_px, config.size))
            adverb = _adverb(speed_px, lo, hi) if config.adverbs and actual != "stays_still" else ""
            clip_seed = int(rng.integers(0, 2**31 - 1))
            clip, prompt = generate_clip(spec, config.frames, config.size, clip_seed, adverb=adverb)
            rel = f"clips/clip_{index:05d}"
            save_clip(clip, out_dir / rel)
            manifest.entries.append(DatasetEntry(rel, prompt, spec, speed_px, clip_seed))
            index += 1
    manifest.save()
    return manifest


def coverage_centroid(frame: np.ndarray, color: str) -> tuple[float, float]:
    """Centroid (x, y) in pixel coordinates of the object coverage recovered from a rendered frame."""
    fg = np.asarray(COLORS[color])
    bg = np.asarray(background_for(color))
    channel = int(np.argmax(np.abs(fg - bg)))
    alpha = (frame[channel] - bg[channel]) / (fg[channel] - bg[channel])
    ys, xs = np.mgrid[0 : frame.shape[1], 0 : frame.shape[2]].astype(np.float64) + 0.5
    total = alpha.sum()
    return float((alpha * xs).sum() / total), float((alpha * ys).sum() / total)
