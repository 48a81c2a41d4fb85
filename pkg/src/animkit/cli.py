"""Command-line interface: ``animkit <command> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

log = logging.getLogger("animkit")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path):
    from animkit.config import TrainConfig

    if path is None:
        return TrainConfig()
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    return TrainConfig.load(path)


def cmd_gen_data(args) -> None:
    from animkit.synthetic import DatasetConfig, generate_dataset

    manifest = generate_dataset(
        DatasetConfig(per_class=args.per_class, frames=args.frames, size=args.size, seed=args.seed), args.out
    )
    print(f"wrote {len(manifest)} clips to {args.out}")


def cmd_fit_buckets(args) -> None:
    from animkit.intensity import fit_buckets, motion_intensity
    from animkit.media_io import load_clip
    from animkit.synthetic import DatasetManifest

    manifest = DatasetManifest.load(args.data)
    values = [motion_intensity(load_clip(manifest.clip_path(e))) for e in manifest.entries]
    table = fit_buckets(values)
    table.save(args.out)
    print(f"fit {len(values)} intensities; boundaries {', '.join(f'{b:.6f}' for b in table.boundaries)}")


def cmd_estimate_intensity(args) -> None:
    from animkit.intensity import BucketTable, intensity_to_level, motion_intensity
    from animkit.media_io import load_clip

    value = motion_intensity(load_clip(args.clip))
    result = {"intensity": value}
    if args.buckets:
        result["level"] = intensity_to_level(value, BucketTable.load(args.buckets))
    print(json.dumps(result))


def cmd_pretrain(args) -> None:
    from animkit.checkpoint import save_checkpoint
    from animkit.trainer import pretrain_frozen_stack

    ckpt = pretrain_frozen_stack(_load_config(args.config), args.data)
    save_checkpoint(ckpt, args.out)
    print(f"pretrained checkpoint written to {args.out}: {json.dumps(ckpt.metrics)}")


def cmd_train(args) -> None:
    from animkit.checkpoint import load_checkpoint
    from animkit.trainer import train

    pretrained = load_checkpoint(args.init)
    config = _load_config(args.config) if args.config else pretrained.config
    ckpt = train(config, args.data, pretrained, out_dir=args.out)
    print(f"checkpoint written to {args.out}: {json.dumps(ckpt.metrics)}")


def cmd_animate(args) -> None:
    from animkit.checkpoint import load_checkpoint
    from animkit.media_io import frame_grid, load_image, save_clip, save_image
    from animkit.pipeline import animate

    ckpt = load_checkpoint(args.ckpt)
    clip = animate(load_image(args.image), args.text, ckpt, level=args.level, steps=args.steps, scale=args.scale,
                   seed=args.seed)
    out = Path(args.out)
    save_clip(clip, out)
    save_image(frame_grid(clip), out / "grid.png")
    print(f"wrote {clip.n_frames} frames and grid.png to {out}")


def _suite_image(case: dict, base: Path):
    from animkit.media_io import StillImage, load_clip, load_image

    if "image" in case:
        return load_image(base / case["image"])
    if "clip" in case:
        return StillImage(load_clip(base / case["clip"]).frames[0])
    raise UsageError(f"suite case {case.get('id', '?')} needs an 'image' or 'clip' entry")


def run_suite(ckpt, suite: dict, base: Path) -> dict:
    """Animate every suite case and score intensity obedience and consistency."""
    from animkit.evaluation import frame_consistency, intensity_obedience
    from animkit.pipeline import DEFAULT_SCALE, DEFAULT_STEPS, animate, shuffled

    if ckpt.buckets is None:
        raise RuntimeError("checkpoint has no bucket table; fit buckets first")
    cases = suite.get("cases")
    if not cases:
        raise UsageError("suite file needs a non-empty 'cases' list")
    steps = int(suite.get("steps", DEFAULT_STEPS))
    scale = float(suite.get("scale", DEFAULT_SCALE))
    clips, ids, shuffled_scores = [], [], []
    backbone = ckpt.model.patch_encoder
    for i, case in enumerate(cases):
        level = int(case.get("level", 5))
        clip = animate(_suite_image(case, base), case.get("text", ""), ckpt, level=level,
                       steps=int(case.get("steps", steps)), scale=float(case.get("scale", scale)),
                       seed=int(case.get("seed", i)))
        clips.append((clip, level))
        ids.append(case.get("id", str(i)))
        shuffled_scores.append(frame_consistency(shuffled(clip, i), backbone))
    report = intensity_obedience(clips, ckpt.buckets, backbone, ids=ids)
    for row, value in zip(report["per_clip"], shuffled_scores):
        row["shuffled_consistency"] = value
    report["aggregate"]["mean_shuffled_consistency"] = sum(shuffled_scores) / len(shuffled_scores)
    report["settings"] = {"steps": steps, "scale": scale, "cases": len(cases)}
    return report


def cmd_evaluate(args) -> None:
    from animkit.checkpoint import load_checkpoint
    from animkit.evaluation import write_report

    suite_path = Path(args.suite)
    if not suite_path.is_file():
        raise UsageError(f"suite file not found: {suite_path}")
    report = run_suite(load_checkpoint(args.ckpt), json.loads(suite_path.read_text()), suite_path.parent)
    write_report(report, args.out)
    print(json.dumps(report["aggregate"], sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="animkit", description="Text-controlled image animation at desk scale.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="render a synthetic moving-shapes dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit-buckets", help="fit decile intensity boundaries over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_buckets)

    p = sub.add_parser("estimate-intensity", help="print a clip's motion intensity (and level)")
    p.add_argument("--clip", required=True)
    p.add_argument("--buckets")
    p.set_defaults(func=cmd_estimate_intensity)

    p = sub.add_parser("pretrain", help="fit and freeze the codec and image denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train motion modules, visual projection and re-weighting head")
    p.add_argument("--data", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("animate", help="animate a still image from a prompt")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--text", default="")
    p.add_argument("--level", type=int, default=5, choices=range(1, 11), metavar="1..10")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_animate)

    p = sub.add_parser("evaluate", help="score a suite of animations into report.json")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"animkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"animkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
