"""Seedable augmentation pipeline for aligned VIS/IR image pairs.

Geometric transforms (flip, rescale, crop/pave) always use one shared
parameter draw applied identically to both modalities and to the boxes, so
the cross-modal alignment is never disturbed. Appearance augmentations
(random erasing, modality masking, noise injection) can run synchronously or
asynchronously across modalities. Every stage draws from its own
sub-generator derived from the master seed and the stage index, in a fixed
documented order, so outputs are reproducible and appending a stage never
changes the draws of earlier stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Annotation, BBox

MIN_BOX_HEIGHT_PX = 2.0
NOISE_MODELS = ("gaussian", "poisson", "salt_pepper")
STAGE_NAMES = ("geometric", "erasing", "masking", "noise")


@dataclass(frozen=True)
class EraseConfig:
    probability: float = 0.5
    area_range: tuple[float, float] = (0.02, 0.4)
    aspect_range: tuple[float, float] = (0.3, 1.0 / 0.3)
    mode: str = "sync"


@dataclass(frozen=True)
class MaskConfig:
    probability: float = 0.5
    split_vis: float = 0.5


@dataclass(frozen=True)
class NoiseConfig:
    probability: float = 0.2
    vis_model: str | None = None
    ir_model: str | None = None
    mode: str = "async"
    gaussian_sigma: float = 0.05
    poisson_peak: float = 30.0
    sp_fraction: float = 0.02


@dataclass(frozen=True)
class AugmentConfig:
    target_size: tuple[int, int] = (384, 480)  # (height, width)
    flip_probability: float = 0.5
    rescale_range: tuple[float, float] = (0.4, 1.5)
    erase: EraseConfig = field(default_factory=EraseConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        for p in (
            self.flip_probability,
            self.erase.probability,
            self.mask.probability,
            self.mask.split_vis,
            self.noise.probability,
        ):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"probability {p} outside [0, 1]")
        for lo, hi in (self.rescale_range, self.erase.area_range, self.erase.aspect_range):
            if lo > hi:
                raise ValueError(f"range ({lo}, {hi}) is not ordered")
        for model in (self.noise.vis_model, self.noise.ir_model):
            if model is not None and model not in NOISE_MODELS:
                raise ValueError(f"unknown noise model {model!r}")
        if self.erase.mode not in ("sync", "async") or self.noise.mode not in ("sync", "async"):
            raise ValueError("mode must be 'sync' or 'async'")


@dataclass
class ImagePair:
    """Aligned 3-channel VIS and 1-channel IR images with shared annotations.

    Arrays are (channels, H, W) with values in [0, 1].
    """

    vis: np.ndarray
    ir: np.ndarray
    annotations: list[Annotation] = field(default_factory=list)

    def __post_init__(self):
        if self.vis.ndim != 3 or self.vis.shape[0] != 3:
            raise ValueError(f"VIS image must be (3, H, W), got {self.vis.shape}")
        if self.ir.ndim != 3 or self.ir.shape[0] != 1:
            raise ValueError(f"IR image must be (1, H, W), got {self.ir.shape}")
        if self.vis.shape[1:] != self.ir.shape[1:]:
            raise ValueError(
                f"modalities must share spatial dims: {self.vis.shape[1:]} vs {self.ir.shape[1:]}"
            )
        for img in (self.vis, self.ir):
            if img.size and (img.min() < 0.0 or img.max() > 1.0):
                raise ValueError("pixel values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.vis.shape[1]

    @property
    def width(self) -> int:
        return self.vis.shape[2]


def _log(param_log: list | None, stage: str, modality: str, **params) -> None:
    if param_log is not None:
        param_log.append({"stage": stage, "modality": modality, **params})


def _resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape[1:]
    sy = (np.floor((np.arange(out_h) + 0.5) * h / out_h)).astype(int).clip(0, h - 1)
    sx = (np.floor((np.arange(out_w) + 0.5) * w / out_w)).astype(int).clip(0, w - 1)
    return img[:, sy[:, None], sx[None, :]]


def geometric_augment(
    pair: ImagePair,
    cfg: AugmentConfig | None = None,
    rng: np.random.Generator | None = None,
    param_log: list | None = None,
) -> ImagePair:
    """Shared flip + rescale + crop/pave onto the target size.

    Draw order: flip bit, scale factor, vertical placement, horizontal
    placement. The same parameters transform both images and all boxes;
    smaller-than-target axes are zero-paved, larger ones cropped. Boxes are
    clipped to the output frame and dropped when their clipped height falls
    below 2 px (or their width vanishes).
    """
    cfg = cfg or AugmentConfig()
    rng = rng if rng is not None else np.random.default_rng()
    th, tw = cfg.target_size
    h, w = pair.height, pair.width

    flip = bool(rng.random() < cfg.flip_probability)
    scale = float(rng.uniform(*cfg.rescale_range))
    sh = max(1, round(h * scale))
    sw = max(1, round(w * scale))

    # Per axis: crop offset samples the source, pave offset the destination.
    def placement(scaled: int, target: int) -> tuple[int, int, int]:
        if scaled >= target:
            off = int(rng.integers(0, scaled - target + 1))
            return off, 0, target
        off = int(rng.integers(0, target - scaled + 1))
        return 0, off, scaled

    src_y, dst_y, len_y = placement(sh, th)
    src_x, dst_x, len_x = placement(sw, tw)

    def transform(img: np.ndarray) -> np.ndarray:
        out = img[:, :, ::-1] if flip else img
        if (sh, sw) != (h, w):
            out = _resize_nearest(out, sh, sw)
        canvas = np.zeros((img.shape[0], th, tw))
        canvas[:, dst_y : dst_y + len_y, dst_x : dst_x + len_x] = out[
            :, src_y : src_y + len_y, src_x : src_x + len_x
        ]
        return canvas

    vis = transform(pair.vis)
    ir = transform(pair.ir)

    shift_x = dst_x - src_x
    shift_y = dst_y - src_y
    anns = []
    for ann in pair.annotations:
        b = ann.box
        x = (w - b.x - b.w) if flip else b.x
        x0 = x * scale + shift_x
        y0 = b.y * scale + shift_y
        x1 = x0 + b.w * scale
        y1 = y0 + b.h * scale
        x0c, x1c = max(0.0, x0), min(float(tw), x1)
        y0c, y1c = max(0.0, y0), min(float(th), y1)
        if x1c - x0c <= 0.0 or y1c - y0c < MIN_BOX_HEIGHT_PX:
            continue
        anns.append(replace(ann, box=BBox(x0c, y0c, x1c - x0c, y1c - y0c)))

    params = dict(flip=flip, scale=scale, src_y=src_y, dst_y=dst_y, src_x=src_x, dst_x=dst_x)
    _log(param_log, "geometric", "vis", **params)
    _log(param_log, "geometric", "ir", **params)
    return ImagePair(vis, ir, anns)


def _draw_erase_rect(
    rng: np.random.Generator, h: int, w: int, cfg: EraseConfig
) -> tuple[int, int, int, int] | None:
    # Rejection-sample a rectangle that fits; give up after 100 attempts.
    for _ in range(100):
        area = float(rng.uniform(*cfg.area_range)) * h * w
        aspect = float(rng.uniform(*cfg.aspect_range))
        eh = int(round(np.sqrt(area * aspect)))
        ew = int(round(np.sqrt(area / aspect)))
        if 0 < eh < h and 0 < ew < w:
            y = int(rng.integers(0, h - eh + 1))
            x = int(rng.integers(0, w - ew + 1))
            return y, x, eh, ew
    return None


def random_erasing(
    pair: ImagePair,
    cfg: AugmentConfig | None = None,
    rng: np.random.Generator | None = None,
    param_log: list | None = None,
    mode: str | None = None,
) -> ImagePair:
    """Erase a random rectangle with uniform-noise fill.

    Sync mode draws the application coin and the rectangle once and erases
    the same region in both modalities (fill noise per modality, VIS first);
    async mode repeats the whole procedure, coin included, per modality.
    Annotations are untouched.
    """
    cfg = cfg or AugmentConfig()
    rng = rng if rng is not None else np.random.default_rng()
    mode = mode or cfg.erase.mode
    h, w = pair.height, pair.width
    vis, ir = pair.vis.copy(), pair.ir.copy()

    def erase(img: np.ndarray, rect) -> None:
        y, x, eh, ew = rect
        img[:, y : y + eh, x : x + ew] = rng.uniform(size=(img.shape[0], eh, ew))

    if mode == "sync":
        applied = bool(rng.random() < cfg.erase.probability)
        rect = _draw_erase_rect(rng, h, w, cfg.erase) if applied else None
        if rect is not None:
            erase(vis, rect)
            erase(ir, rect)
        for modality in ("vis", "ir"):
            _log(param_log, "erasing", modality, applied=rect is not None, rect=rect)
    elif mode == "async":
        for modality, img in (("vis", vis), ("ir", ir)):
            applied = bool(rng.random() < cfg.erase.probability)
            rect = _draw_erase_rect(rng, h, w, cfg.erase) if applied else None
            if rect is not None:
                erase(img, rect)
            _log(param_log, "erasing", modality, applied=rect is not None, rect=rect)
    else:
        raise ValueError(f"unknown erasing mode {mode!r}")
    return ImagePair(vis, ir, list(pair.annotations))


def random_masking(
    pair: ImagePair,
    cfg: AugmentConfig | None = None,
    rng: np.random.Generator | None = None,
    param_log: list | None = None,
) -> ImagePair:
    """Zero out one modality, or neither, never both.

    One coin decides whether anything is masked at all; a second draw picks
    VIS with probability ``split_vis``, IR otherwise. Annotations untouched.
    """
    cfg = cfg or AugmentConfig()
    rng = rng if rng is not None else np.random.default_rng()
    masked = "none"
    if rng.random() < cfg.mask.probability:
        masked = "vis" if rng.random() < cfg.mask.split_vis else "ir"
    vis = np.zeros_like(pair.vis) if masked == "vis" else pair.vis.copy()
    ir = np.zeros_like(pair.ir) if masked == "ir" else pair.ir.copy()
    for modality in ("vis", "ir"):
        _log(param_log, "masking", modality, masked=masked)
    return ImagePair(vis, ir, list(pair.annotations))


def _apply_noise(img: np.ndarray, model: str, cfg: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    if model == "gaussian":
        return np.clip(img + rng.normal(0.0, cfg.gaussian_sigma, size=img.shape), 0.0, 1.0)
    if model == "poisson":
        return np.clip(rng.poisson(img * cfg.poisson_peak) / cfg.poisson_peak, 0.0, 1.0)
    if model == "salt_pepper":
        out = img.copy()
        c, h, w = img.shape
        n = int(round(cfg.sp_fraction * h * w))
        flat = rng.choice(h * w, size=n, replace=False)
        values = rng.integers(0, 2, size=n).astype(float)
        out[:, flat // w, flat % w] = values  # whole pixel across channels
        return out
    raise ValueError(f"unknown noise model {model!r}")


def inject_noise(
    pair: ImagePair,
    cfg: AugmentConfig | None = None,
    rng: np.random.Generator | None = None,
    param_log: list | None = None,
    mode: str | None = None,
) -> ImagePair:
    """Apply the configured per-modality noise models with probability 0.2.

    Async mode draws the application coin independently per configured
    modality (VIS first); sync mode draws it once for both. Modalities whose
    model is None are never touched. Outputs stay clamped to [0, 1].
    """
    cfg = cfg or AugmentConfig()
    rng = rng if rng is not None else np.random.default_rng()
    mode = mode or cfg.noise.mode
    if mode not in ("sync", "async"):
        raise ValueError(f"unknown noise mode {mode!r}")
    models = {"vis": cfg.noise.vis_model, "ir": cfg.noise.ir_model}
    images = {"vis": pair.vis.copy(), "ir": pair.ir.copy()}

    shared = bool(rng.random() < cfg.noise.probability) if mode == "sync" else None
    for modality in ("vis", "ir"):
        model = models[modality]
        if model is None:
            _log(param_log, "noise", modality, applied=False, model=None)
            continue
        applied = shared if shared is not None else bool(rng.random() < cfg.noise.probability)
        if applied:
            images[modality] = _apply_noise(images[modality], model, cfg.noise, rng)
        _log(param_log, "noise", modality, applied=applied, model=model)
    return ImagePair(images["vis"], images["ir"], list(pair.annotations))


def _split_stage(name: str) -> tuple[str, str | None]:
    base, _, suffix = name.partition("-")
    if base not in STAGE_NAMES:
        raise ValueError(f"invalid stage name {name!r}")
    if suffix:
        if base not in ("erasing", "noise") or suffix not in ("sync", "async"):
            raise ValueError(f"invalid stage name {name!r}")
        return base, suffix
    return base, None


def apply_pipeline(
    pair: ImagePair,
    cfg: AugmentConfig | None = None,
    stages: list[str] | tuple[str, ...] = (),
    seed: int | np.random.SeedSequence = 0,
    param_log: list | None = None,
) -> ImagePair:
    """Run the named stages in order with per-stage sub-generators.

    Stage names: geometric, erasing[-sync|-async], masking,
    noise[-sync|-async]; a suffix overrides the configured mode. The
    geometric stage, when present, must come first. Sub-generator i is
    derived from (seed, stage index), so equal seeds give bit-identical
    outputs and appended stages never perturb earlier draws.
    """
    cfg = cfg or AugmentConfig()
    parsed = [_split_stage(name) for name in stages]
    if any(base == "geometric" for base, _ in parsed[1:]):
        raise ValueError("the geometric stage must come first")

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(len(parsed))
    out = pair
    for (base, suffix), child in zip(parsed, children):
        rng = np.random.default_rng(child)
        if base == "geometric":
            out = geometric_augment(out, cfg, rng, param_log)
        elif base == "erasing":
            out = random_erasing(out, cfg, rng, param_log, mode=suffix)
        elif base == "masking":
            out = random_masking(out, cfg, rng, param_log)
        else:
            out = inject_noise(out, cfg, rng, param_log, mode=suffix)
    return out
