"""Batch command-line interface tying the library together.

Subcommands: encode, decode, simulate, augment, evaluate, fuse-annotations,
plot. Failures exit non-zero after printing a single ``error: ...`` line to
stderr. Given identical arguments, config, and seed, output files are
byte-identical across runs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from . import formats
from .codec import ImageSize, decode_detections, encode_targets
from .evaluation import evaluate, render_report
from .fusion import Topology, build_fusion_graph, forward, graph_report


def _load_config(path: str | None) -> formats.RunConfig:
    if path is None:
        return formats.default_config()
    return formats.parse_config(path)


def _parse_hw(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"size must look like HxW, got {text!r}")
    return int(parts[0]), int(parts[1])


def _cmd_encode(args) -> int:
    cfg = _load_config(args.config)
    frame_id, anns = formats.parse_annotations(args.ann)
    height = args.height if args.height is not None else cfg.input_size[0]
    width = args.width if args.width is not None else cfg.input_size[1]
    maps = encode_targets(anns, ImageSize(width=width, height=height), cfg.codec)
    formats.write_target_maps(args.out, maps)
    print(f"encoded {frame_id}: {maps.shape[0]}x{maps.shape[1]} maps -> {args.out}")
    return 0


def _cmd_decode(args) -> int:
    cfg = _load_config(args.config)
    maps = formats.read_target_maps(args.maps)
    rows, cols = maps.shape
    size = ImageSize(width=cols * cfg.codec.stride, height=rows * cfg.codec.stride)
    dets = decode_detections(maps, size, cfg.codec)
    frame_id = args.frame_id or Path(args.maps).stem
    formats.write_detections(args.out, {frame_id: dets})
    print(f"decoded {len(dets)} detections -> {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    h, w = _parse_hw(args.input)
    topology = Topology(args.topology)
    seed = args.seed if args.seed is not None else cfg.seed
    graph = build_fusion_graph(topology, cfg.backbone, seed, cfg.head_channels)
    rng = np.random.default_rng(seed)
    vis = rng.uniform(size=(3, h, w))
    ir = rng.uniform(size=(1, h, w))
    forward(graph, vis, ir)  # exercises the wiring; shapes are in the report
    report = graph_report(graph, (h, w))
    if args.out:
        Path(args.out).write_text(report + "\n")
    print(report)
    return 0


def _cmd_augment(args) -> int:
    cfg = _load_config(args.config)
    pairs_dir = Path(args.pairs)
    vis_dir, ir_dir, ann_dir = pairs_dir / "vis", pairs_dir / "ir", pairs_dir / "ann"
    if not vis_dir.is_dir() or not ir_dir.is_dir():
        raise ValueError(f"{pairs_dir} must contain vis/ and ir/ subdirectories")
    stems = sorted(p.stem for p in vis_dir.glob("*.png"))
    if not stems:
        raise ValueError(f"no PNG images in {vis_dir}")
    ir_stems = {p.stem for p in ir_dir.glob("*.png")}
    missing = [s for s in stems if s not in ir_stems]
    if missing:
        raise ValueError(f"IR images missing for frames: {missing}")

    out_dir = Path(args.out)
    for sub in ("vis", "ir", "ann"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.seed
    stages = cfg.stages

    audit_lines = []
    for idx, stem in enumerate(stems):
        pair = aug.ImagePair(
            vis=formats.load_image(vis_dir / f"{stem}.png", 3),
            ir=formats.load_image(ir_dir / f"{stem}.png", 1),
            annotations=(
                formats.parse_annotations(ann_dir / f"{stem}.txt")[1]
                if (ann_dir / f"{stem}.txt").is_file()
                else []
            ),
        )
        log: list = []
        result = aug.apply_pipeline(
            pair,
            cfg.augment,
            stages,
            seed=np.random.SeedSequence(entropy=seed, spawn_key=(idx,)),
            param_log=log,
        )
        formats.save_image(out_dir / "vis" / f"{stem}.png", result.vis)
        formats.save_image(out_dir / "ir" / f"{stem}.png", result.ir)
        formats.write_annotations(out_dir / "ann" / f"{stem}.txt", result.annotations)
        entries = " | ".join(
            " ".join([f"stage={e['stage']}", f"modality={e['modality']}"]
                     + [f"{k}={v}" for k, v in e.items() if k not in ("stage", "modality")])
            for e in log
        )
        audit_lines.append(f"{stem} {entries}")

    if args.dump_params:
        Path(args.dump_params).write_text("".join(line + "\n" for line in audit_lines))
    print(f"augmented {len(stems)} pairs -> {out_dir} (stages: {' '.join(stages) or 'none'})")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    dets = formats.parse_detections(args.dets)
    gts = formats.load_annotation_dir(args.ann)
    names = args.subset or ["reasonable", "all"]
    specs = []
    for name in names:
        if name not in cfg.subsets:
            raise ValueError(
                f"unknown subset {name!r} (configured: {sorted(cfg.subsets)})"
            )
        specs.append(cfg.subsets[name])
    report = evaluate(dets, gts, specs, cfg.size_bins, cfg.occ_bins)
    text = render_report(report)
    print(text)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text + "\n")
        for name, curve in report.curves.items():
            safe = "".join(c if c.isalnum() else "_" for c in name).strip("_")
            lines = ["fppi,miss_rate"] + [
                f"{formats._fmt(fppi)},{formats._fmt(mr)}" for fppi, mr in curve.points
            ]
            (out / f"curve_{safe}.csv").write_text("".join(l + "\n" for l in lines))
    return 0


def _cmd_fuse_annotations(args) -> int:
    fused = formats.fuse_annotation_dirs(args.vis, args.ir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stem in sorted(fused):
        formats.write_annotations(out / f"{stem}.txt", fused[stem])
    print(f"fused {len(fused)} annotation files -> {out}")
    return 0


def _cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = args.labels or [Path(p).stem for p in args.curves]
    if len(labels) != len(args.curves):
        raise ValueError("need exactly one label per curve file")
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for path, label in zip(args.curves, labels):
        rows = Path(path).read_text().splitlines()
        if not rows or rows[0].strip() != "fppi,miss_rate":
            raise ValueError(f"{path}: expected header 'fppi,miss_rate'")
        pts = [tuple(float(t) for t in row.split(",")) for row in rows[1:] if row.strip()]
        # Log axes cannot show zero; clamp to the usual plotting floor.
        fppi = [max(p[0], 1e-4) for p in pts]
        mr = [max(p[1], 1e-4) for p in pts]
        ax.plot(fppi, mr, drawstyle="steps-post", label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("false positives per image")
    ax.set_ylabel("miss rate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out)
    plt.close(fig)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mscsp",
        description="Multispectral center/scale pedestrian detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="annotations -> binary target-map dump")
    p.add_argument("--ann", required=True, help="annotation file for one frame")
    p.add_argument("--height", type=int, default=None, help="image height in px")
    p.add_argument("--width", type=int, default=None, help="image width in px")
    p.add_argument("--out", required=True, help="output map dump path")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="target-map dump -> detection file")
    p.add_argument("--maps", required=True, help="map dump path")
    p.add_argument("--frame-id", default=None, help="frame id (default: dump stem)")
    p.add_argument("--out", required=True, help="output detection file")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("simulate", help="run one fusion topology forward")
    p.add_argument(
        "--topology", required=True, choices=[t.value for t in Topology]
    )
    p.add_argument("--input", required=True, help="input size HxW, e.g. 64x80")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="also write the report here")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("augment", help="augment a directory of VIS/IR pairs")
    p.add_argument("--pairs", required=True, help="directory with vis/, ir/, ann/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dump-params", default=None, help="write per-frame parameter audit log")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("evaluate", help="miss rate / FPPI evaluation")
    p.add_argument("--dets", required=True, help="detection file")
    p.add_argument("--ann", required=True, help="ground-truth annotation directory")
    p.add_argument("--subset", action="append", default=None,
                   help="subset name (repeatable; default: reasonable and all)")
    p.add_argument("--out-dir", default=None, help="write report.txt and curve CSVs here")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("fuse-annotations", help="union per-modality annotation pairs")
    p.add_argument("--vis", required=True, help="VIS annotation directory")
    p.add_argument("--ir", required=True, help="IR annotation directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fuse_annotations)

    p = sub.add_parser("plot", help="plot MR vs FPPI curves on log-log axes")
    p.add_argument("--curves", nargs="+", required=True, help="curve CSV files")
    p.add_argument("--labels", nargs="+", default=None)
    p.add_argument("--out", required=True, help="output figure (pdf/svg/png)")
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
