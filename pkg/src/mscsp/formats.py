"""File formats: annotation and detection text files, the key-value run
configuration, the binary target-map dump, and paired-annotation fusion.

Parsing is strict: malformed lines raise with file and line position, never
skip silently. Floats are written with 6 significant digits, which makes
write -> parse -> write a byte-level fixed point.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, EraseConfig, MaskConfig, NoiseConfig, STAGE_NAMES
from .codec import CodecConfig, Detection, TargetMaps
from .evaluation import DEFAULT_OCC_BINS, DEFAULT_SIZE_BINS
from .fusion import BackboneSpec, DEFAULT_HEAD_CHANNELS
from .geometry import (
    ALL_SUBSET,
    Annotation,
    BBox,
    Label,
    Occlusion,
    REASONABLE_SUBSET,
    SubsetSpec,
    union_box,
)
from .losses import LossConfig

MAP_DUMP_MAGIC = b"MSCSP1"


class ParseError(ValueError):
    """Malformed file content, with position information in the message."""


def _fmt(value: float) -> str:
    return format(value, ".6g")


def _parse_float(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"{where}: not a number: {token!r}") from None


# ---------------------------------------------------------------- annotations

_LABELS = {label.value: label for label in Label}
_OCCLUSIONS = {str(o.value): o for o in Occlusion}


def parse_annotation_line(line: str, where: str) -> Annotation:
    tokens = line.split()
    if len(tokens) != 6:
        raise ParseError(f"{where}: expected 6 tokens 'label x y w h occlusion', got {len(tokens)}")
    label_tok, *coords, occ_tok = tokens
    if label_tok not in _LABELS:
        raise ParseError(f"{where}: unknown label {label_tok!r}")
    x, y, w, h = (_parse_float(t, where) for t in coords)
    if w <= 0:
        raise ParseError(f"{where}: non-positive width")
    if h <= 0:
        raise ParseError(f"{where}: non-positive height")
    if occ_tok not in _OCCLUSIONS:
        raise ParseError(f"{where}: occlusion must be 0, 1 or 2, got {occ_tok!r}")
    return Annotation(BBox(x, y, w, h), _LABELS[label_tok], _OCCLUSIONS[occ_tok])


def parse_annotations(path: str | Path) -> tuple[str, list[Annotation]]:
    """Read one frame's annotation file; the frame id is the file stem.

    Lines hold ``label x y w h occlusion``; ``#`` comment lines and blank
    lines are skipped.
    """
    path = Path(path)
    anns = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        anns.append(parse_annotation_line(line, f"{path.name}:{lineno}"))
    return path.stem, anns


def write_annotations(path: str | Path, anns: list[Annotation]) -> None:
    lines = [
        f"{a.label.value} {_fmt(a.box.x)} {_fmt(a.box.y)} "
        f"{_fmt(a.box.w)} {_fmt(a.box.h)} {a.occlusion.value}"
        for a in anns
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_annotation_dir(directory: str | Path) -> dict[str, list[Annotation]]:
    directory = Path(directory)
    files = sorted(directory.glob("*.txt"))
    if not files:
        raise ParseError(f"no annotation files (*.txt) in {directory}")
    return dict(parse_annotations(f) for f in files)


# ----------------------------------------------------------------- detections


def parse_detections(path: str | Path) -> dict[str, list[Detection]]:
    """Read ``frame_id x y w h score`` lines, grouped by frame in file order."""
    path = Path(path)
    out: dict[str, list[Detection]] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{path.name}:{lineno}"
        tokens = line.split()
        if len(tokens) != 6:
            raise ParseError(f"{where}: expected 6 tokens 'frame x y w h score', got {len(tokens)}")
        frame = tokens[0]
        x, y, w, h, score = (_parse_float(t, where) for t in tokens[1:])
        if w <= 0 or h <= 0:
            raise ParseError(f"{where}: non-positive box extent")
        if not (0.0 <= score <= 1.0):
            raise ParseError(f"{where}: score {score} outside [0, 1]")
        out.setdefault(frame, []).append(Detection(BBox(x, y, w, h), score))
    return out


def write_detections(path: str | Path, dets_by_frame: dict[str, list[Detection]]) -> None:
    lines = []
    for frame, dets in dets_by_frame.items():
        if any(ch.isspace() for ch in frame):
            raise ValueError(f"frame id {frame!r} contains whitespace")
        for d in dets:
            lines.append(
                f"{frame} {_fmt(d.box.x)} {_fmt(d.box.y)} "
                f"{_fmt(d.box.w)} {_fmt(d.box.h)} {_fmt(d.score)}"
            )
    Path(path).write_text("".join(line + "\n" for line in lines))


# -------------------------------------------------------------------- map dump


def write_target_maps(path: str | Path, maps: TargetMaps) -> None:
    """Binary dump: magic, uint32 rows/cols, then float32 LE planes in the
    order center, scale, offset-x, offset-y."""
    rows, cols = maps.shape
    planes = [maps.center, maps.scale, maps.offset[..., 0], maps.offset[..., 1]]
    with open(path, "wb") as fh:
        fh.write(MAP_DUMP_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        for plane in planes:
            fh.write(np.ascontiguousarray(plane, dtype="<f4").tobytes())


def read_target_maps(path: str | Path) -> TargetMaps:
    """Inverse of write_target_maps; the positive mask is recovered as the
    cells whose center value is exactly 1."""
    data = Path(path).read_bytes()
    head = len(MAP_DUMP_MAGIC) + 8
    if len(data) < head or data[: len(MAP_DUMP_MAGIC)] != MAP_DUMP_MAGIC:
        raise ParseError(f"{path}: not a target-map dump (bad magic)")
    rows, cols = struct.unpack("<II", data[len(MAP_DUMP_MAGIC) : head])
    expected = head + 4 * 4 * rows * cols
    if len(data) != expected:
        raise ParseError(f"{path}: truncated dump, expected {expected} bytes, got {len(data)}")
    planes = np.frombuffer(data[head:], dtype="<f4").reshape(4, rows, cols).astype(np.float64)
    center, scale, off_x, off_y = planes
    return TargetMaps(center, scale, np.stack([off_x, off_y], axis=-1), center == 1.0)


# ------------------------------------------------------------ paired fusion


def fuse_annotation_dirs(
    vis_dir: str | Path, ir_dir: str | Path
) -> dict[str, list[Annotation]]:
    """Merge per-modality annotation directories into union boxes.

    File stems must match exactly between the directories and line i of each
    file pair must describe the same pedestrian. Labels and occlusion levels
    are taken from the VIS entry.
    """
    vis_dir, ir_dir = Path(vis_dir), Path(ir_dir)
    vis_files = {f.stem: f for f in sorted(vis_dir.glob("*.txt"))}
    ir_files = {f.stem: f for f in sorted(ir_dir.glob("*.txt"))}
    if set(vis_files) != set(ir_files):
        only_vis = sorted(set(vis_files) - set(ir_files))
        only_ir = sorted(set(ir_files) - set(vis_files))
        raise ParseError(
            f"annotation directories disagree: only in vis {only_vis}, only in ir {only_ir}"
        )
    fused: dict[str, list[Annotation]] = {}
    for stem in sorted(vis_files):
        _, vis_anns = parse_annotations(vis_files[stem])
        _, ir_anns = parse_annotations(ir_files[stem])
        if len(vis_anns) != len(ir_anns):
            raise ParseError(
                f"line-count mismatch for frame {stem}: "
                f"vis has {len(vis_anns)}, ir has {len(ir_anns)}"
            )
        fused[stem] = [
            replace(v, box=union_box(v.box, i.box)) for v, i in zip(vis_anns, ir_anns)
        ]
    return fused


# -------------------------------------------------------------------- config


@dataclass(frozen=True)
class TrainingReference:
    """Documented training constants; recorded for reference, never executed."""

    optimizer: str = "adam"
    learning_rate: float = 1e-4
    epochs: int = 100
    samples_per_epoch: int = 2000
    batch_size: int = 12


@dataclass
class RunConfig:
    codec: CodecConfig
    loss: LossConfig
    augment: AugmentConfig
    backbone: BackboneSpec
    head_channels: int
    seed: int
    input_size: tuple[int, int]  # (height, width)
    subsets: dict[str, SubsetSpec]
    size_bins: tuple[tuple[float, float], ...]
    occ_bins: tuple[Occlusion, ...]
    stages: tuple[str, ...]
    training: TrainingReference


def default_config() -> RunConfig:
    return RunConfig(
        codec=CodecConfig(),
        loss=LossConfig(),
        augment=AugmentConfig(),
        backbone=BackboneSpec(),
        head_channels=DEFAULT_HEAD_CHANNELS,
        seed=0,
        input_size=(384, 480),
        subsets={"reasonable": REASONABLE_SUBSET, "all": ALL_SUBSET},
        size_bins=DEFAULT_SIZE_BINS,
        occ_bins=DEFAULT_OCC_BINS,
        stages=("geometric",),
        training=TrainingReference(),
    )


def _parse_int(token: str, where: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{where}: not an integer: {token!r}") from None


def _parse_bound(token: str, where: str) -> float:
    if token == "inf":
        return math.inf
    return _parse_float(token, where)


_OCC_NAMES = {o.name.lower(): o for o in Occlusion}


def _parse_subset(name: str, value: str, where: str) -> SubsetSpec:
    tokens = value.split()
    if len(tokens) != 3:
        raise ParseError(f"{where}: subset needs 'min_height max_height occ|occ', got {value!r}")
    min_h = _parse_float(tokens[0], where)
    max_h = _parse_bound(tokens[1], where)
    occs = set()
    for part in tokens[2].split("|"):
        if part not in _OCC_NAMES:
            raise ParseError(f"{where}: unknown occlusion level {part!r}")
        occs.add(_OCC_NAMES[part])
    return SubsetSpec(name.title(), min_h, max_h, frozenset(occs))


def _parse_occ_bins(value: str, where: str) -> tuple[Occlusion, ...]:
    levels = []
    for part in value.split():
        if part not in _OCC_NAMES:
            raise ParseError(f"{where}: unknown occlusion level {part!r}")
        levels.append(_OCC_NAMES[part])
    return tuple(levels)


def _parse_size_bins(value: str, where: str) -> tuple[tuple[float, float], ...]:
    bins = []
    for part in value.split():
        lo_hi = part.split("-")
        if len(lo_hi) != 2:
            raise ParseError(f"{where}: size bin must look like 'lo-hi', got {part!r}")
        bins.append((_parse_float(lo_hi[0], where), _parse_bound(lo_hi[1], where)))
    return tuple(bins)


def _noise_model(token: str, where: str) -> str | None:
    if token == "none":
        return None
    return token


def parse_config(path: str | Path) -> RunConfig:
    """Read a flat ``key = value`` document over the defaults.

    Unknown or duplicate keys are hard errors; missing keys keep their
    documented default values.
    """
    path = Path(path)
    values: dict[str, str] = {}
    wheres: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{path.name}:{lineno}"
        if "=" not in line:
            raise ParseError(f"{where}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in values:
            raise ParseError(f"{where}: duplicate key {key!r}")
        values[key] = value
        wheres[key] = where

    cfg = default_config()
    subsets = dict(cfg.subsets)
    known = set(_flatten_config(cfg))

    for key in list(values):
        if key.startswith("subset."):
            name = key[len("subset.") :]
            subsets[name] = _parse_subset(name, values.pop(key), wheres[key])

    unknown = [k for k in values if k not in known]
    if unknown:
        raise ParseError(f"{wheres[unknown[0]]}: unknown key {unknown[0]!r}")

    def take(key: str, parse, current):
        if key not in values:
            return current
        return parse(values[key], wheres[key])

    f, i = _parse_float, _parse_int
    codec = CodecConfig(
        stride=take("codec.stride", i, cfg.codec.stride),
        confidence_threshold=take("codec.confidence_threshold", f, cfg.codec.confidence_threshold),
        nms_threshold=take("codec.nms_threshold", f, cfg.codec.nms_threshold),
        aspect_ratio=take("codec.aspect_ratio", f, cfg.codec.aspect_ratio),
        gaussian_sigma_factor=take(
            "codec.gaussian_sigma_factor", f, cfg.codec.gaussian_sigma_factor
        ),
        target_radius=take("codec.target_radius", i, cfg.codec.target_radius),
    )
    loss = LossConfig(
        focal_gamma=take("loss.focal_gamma", f, cfg.loss.focal_gamma),
        negative_beta=take("loss.negative_beta", f, cfg.loss.negative_beta),
        weight_center=take("loss.weight_center", f, cfg.loss.weight_center),
        weight_scale=take("loss.weight_scale", f, cfg.loss.weight_scale),
        weight_offset=take("loss.weight_offset", f, cfg.loss.weight_offset),
        smooth_l1_delta=take("loss.smooth_l1_delta", f, cfg.loss.smooth_l1_delta),
        epsilon=take("loss.epsilon", f, cfg.loss.epsilon),
    )
    aug = cfg.augment
    augment = AugmentConfig(
        target_size=(
            take("augment.target_height", i, aug.target_size[0]),
            take("augment.target_width", i, aug.target_size[1]),
        ),
        flip_probability=take("augment.flip_probability", f, aug.flip_probability),
        rescale_range=(
            take("augment.rescale_min", f, aug.rescale_range[0]),
            take("augment.rescale_max", f, aug.rescale_range[1]),
        ),
        erase=EraseConfig(
            probability=take("augment.erase_probability", f, aug.erase.probability),
            area_range=(
                take("augment.erase_area_min", f, aug.erase.area_range[0]),
                take("augment.erase_area_max", f, aug.erase.area_range[1]),
            ),
            aspect_range=(
                take("augment.erase_aspect_min", f, aug.erase.aspect_range[0]),
                take("augment.erase_aspect_max", f, aug.erase.aspect_range[1]),
            ),
            mode=take("augment.erase_mode", lambda v, w: v, aug.erase.mode),
        ),
        mask=MaskConfig(
            probability=take("augment.mask_probability", f, aug.mask.probability),
            split_vis=take("augment.mask_split_vis", f, aug.mask.split_vis),
        ),
        noise=NoiseConfig(
            probability=take("augment.noise_probability", f, aug.noise.probability),
            vis_model=take("augment.noise_vis_model", _noise_model, aug.noise.vis_model),
            ir_model=take("augment.noise_ir_model", _noise_model, aug.noise.ir_model),
            mode=take("augment.noise_mode", lambda v, w: v, aug.noise.mode),
            gaussian_sigma=take("augment.noise_gaussian_sigma", f, aug.noise.gaussian_sigma),
            poisson_peak=take("augment.noise_poisson_peak", f, aug.noise.poisson_peak),
            sp_fraction=take("augment.noise_sp_fraction", f, aug.noise.sp_fraction),
        ),
    )

    def parse_stage_list(value: str, where: str) -> tuple[str, ...]:
        stages = tuple(value.split())
        for s in stages:
            base = s.split("-")[0]
            if base not in STAGE_NAMES:
                raise ParseError(f"{where}: invalid stage name {s!r}")
        return stages

    def parse_ints(value: str, where: str) -> tuple[int, ...]:
        return tuple(_parse_int(t, where) for t in value.split())

    channels = take("backbone.channels", parse_ints, cfg.backbone.channels)
    strides = take(
        "backbone.strides", parse_ints, tuple(s for _, s in cfg.backbone.stages)
    )
    if len(channels) != len(strides):
        raise ParseError(f"{path.name}: backbone channels and strides disagree in length")
    backbone = BackboneSpec(tuple(zip(channels, strides)))

    return RunConfig(
        codec=codec,
        loss=loss,
        augment=augment,
        backbone=backbone,
        head_channels=take("fusion.head_channels", i, cfg.head_channels),
        seed=take("seed", i, cfg.seed),
        input_size=(
            take("input.height", i, cfg.input_size[0]),
            take("input.width", i, cfg.input_size[1]),
        ),
        subsets=subsets,
        size_bins=take("eval.size_bins", _parse_size_bins, cfg.size_bins),
        occ_bins=take("eval.occ_bins", _parse_occ_bins, cfg.occ_bins),
        stages=take("augment.stages", parse_stage_list, cfg.stages),
        training=TrainingReference(
            optimizer=take("train.optimizer", lambda v, w: v, cfg.training.optimizer),
            learning_rate=take("train.learning_rate", f, cfg.training.learning_rate),
            epochs=take("train.epochs", i, cfg.training.epochs),
            samples_per_epoch=take("train.samples_per_epoch", i, cfg.training.samples_per_epoch),
            batch_size=take("train.batch_size", i, cfg.training.batch_size),
        ),
    )


def _flatten_config(cfg: RunConfig) -> dict[str, str]:
    """All config keys with their formatted values, in canonical order."""
    bound = lambda v: "inf" if math.isinf(v) else _fmt(v)
    out = {
        "seed": str(cfg.seed),
        "input.height": str(cfg.input_size[0]),
        "input.width": str(cfg.input_size[1]),
        "codec.stride": str(cfg.codec.stride),
        "codec.confidence_threshold": _fmt(cfg.codec.confidence_threshold),
        "codec.nms_threshold": _fmt(cfg.codec.nms_threshold),
        "codec.aspect_ratio": _fmt(cfg.codec.aspect_ratio),
        "codec.gaussian_sigma_factor": _fmt(cfg.codec.gaussian_sigma_factor),
        "codec.target_radius": str(cfg.codec.target_radius),
        "loss.focal_gamma": _fmt(cfg.loss.focal_gamma),
        "loss.negative_beta": _fmt(cfg.loss.negative_beta),
        "loss.weight_center": _fmt(cfg.loss.weight_center),
        "loss.weight_scale": _fmt(cfg.loss.weight_scale),
        "loss.weight_offset": _fmt(cfg.loss.weight_offset),
        "loss.smooth_l1_delta": _fmt(cfg.loss.smooth_l1_delta),
        "loss.epsilon": _fmt(cfg.loss.epsilon),
        "augment.target_height": str(cfg.augment.target_size[0]),
        "augment.target_width": str(cfg.augment.target_size[1]),
        "augment.flip_probability": _fmt(cfg.augment.flip_probability),
        "augment.rescale_min": _fmt(cfg.augment.rescale_range[0]),
        "augment.rescale_max": _fmt(cfg.augment.rescale_range[1]),
        "augment.erase_probability": _fmt(cfg.augment.erase.probability),
        "augment.erase_area_min": _fmt(cfg.augment.erase.area_range[0]),
        "augment.erase_area_max": _fmt(cfg.augment.erase.area_range[1]),
        "augment.erase_aspect_min": _fmt(cfg.augment.erase.aspect_range[0]),
        "augment.erase_aspect_max": _fmt(cfg.augment.erase.aspect_range[1]),
        "augment.erase_mode": cfg.augment.erase.mode,
        "augment.mask_probability": _fmt(cfg.augment.mask.probability),
        "augment.mask_split_vis": _fmt(cfg.augment.mask.split_vis),
        "augment.noise_probability": _fmt(cfg.augment.noise.probability),
        "augment.noise_vis_model": cfg.augment.noise.vis_model or "none",
        "augment.noise_ir_model": cfg.augment.noise.ir_model or "none",
        "augment.noise_mode": cfg.augment.noise.mode,
        "augment.noise_gaussian_sigma": _fmt(cfg.augment.noise.gaussian_sigma),
        "augment.noise_poisson_peak": _fmt(cfg.augment.noise.poisson_peak),
        "augment.noise_sp_fraction": _fmt(cfg.augment.noise.sp_fraction),
        "augment.stages": " ".join(cfg.stages),
        "backbone.channels": " ".join(str(c) for c, _ in cfg.backbone.stages),
        "backbone.strides": " ".join(str(s) for _, s in cfg.backbone.stages),
        "fusion.head_channels": str(cfg.head_channels),
        "eval.size_bins": " ".join(f"{_fmt(lo)}-{bound(hi)}" for lo, hi in cfg.size_bins),
        "eval.occ_bins": " ".join(o.name.lower() for o in cfg.occ_bins),
        "train.optimizer": cfg.training.optimizer,
        "train.learning_rate": _fmt(cfg.training.learning_rate),
        "train.epochs": str(cfg.training.epochs),
        "train.samples_per_epoch": str(cfg.training.samples_per_epoch),
        "train.batch_size": str(cfg.training.batch_size),
    }
    for name, spec in cfg.subsets.items():
        occs = "|".join(o.name.lower() for o in sorted(spec.allowed_occlusion))
        out[f"subset.{name}"] = f"{_fmt(spec.min_height)} {bound(spec.max_height)} {occs}"
    return out


def write_config(path: str | Path, cfg: RunConfig) -> None:
    lines = [f"{key} = {value}" for key, value in _flatten_config(cfg).items()]
    Path(path).write_text("".join(line + "\n" for line in lines))


# -------------------------------------------------------------------- images


def load_image(path: str | Path, channels: int) -> np.ndarray:
    """Read an 8-bit raster file into a (channels, H, W) array in [0, 1].

    ``channels`` selects the mode: 3 loads as RGB, 1 as grayscale.
    """
    from PIL import Image

    with Image.open(path) as img:
        img = img.convert("RGB" if channels == 3 else "L")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    if channels == 3:
        return np.moveaxis(arr, -1, 0)
    return arr[None, :, :]


def save_image(path: str | Path, img: np.ndarray) -> None:
    """Write a (channels, H, W) array in [0, 1] as an 8-bit PNG."""
    from PIL import Image

    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    if img.shape[0] == 3:
        Image.fromarray(np.moveaxis(data, 0, -1), mode="RGB").save(path)
    elif img.shape[0] == 1:
        Image.fromarray(data[0], mode="L").save(path)
    else:
        raise ValueError(f"cannot save image with {img.shape[0]} channels")
