"""Forward-only simulator for the two-stream VIS/IR fusion architectures.

Seven wirings of a small five-stage convolutional backbone are realised as
explicit dataflow: channel-stacked input fusion, two independent towers fused
only in the detection head, per-stage additive fusion, a halfway merge with a
shared tail, per-level fusion blocks, and the two single-modality baselines.
Feature maps from stages three to five are L2-normalised, upsampled to 1/4 of
the input resolution with fixed bilinear kernels, concatenated, and reduced
by a small detection head into center/scale/offset planes.

Weights are randomly initialised from a seeded generator (biases start at
zero); there is no training, the point is verifiable wiring: output shapes,
parameter counts, linearity of the cloned input layer, and exact collapse to
a single-modality path when the other input is all zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .codec import TargetMaps

HEAD_STRIDE = 4
L2_EPS = 1e-10
L2_SCALE_INIT = 10.0
DEFAULT_HEAD_CHANNELS = 64


class Topology(enum.Enum):
    INPUT_FUSION = "input-fusion"
    LATE_FUSION_BASELINE = "late-fusion-baseline"
    SPARSE_FUSION = "sparse-fusion"
    HALFWAY_FUSION = "halfway-fusion"
    LATE_FUSION = "late-fusion"
    VIS_ONLY = "vis-only"
    IR_ONLY = "ir-only"


@dataclass(frozen=True)
class BackboneSpec:
    """Five (out_channels, stride) stages with cumulative strides (..., 8, 16, 16)."""

    stages: tuple[tuple[int, int], ...] = ((8, 2), (16, 2), (32, 2), (64, 2), (64, 1))

    def __post_init__(self):
        if len(self.stages) != 5:
            raise ValueError(f"backbone needs exactly 5 stages, got {len(self.stages)}")
        cum = 1
        cums = []
        for ch, s in self.stages:
            if ch <= 0 or s not in (1, 2):
                raise ValueError(f"invalid stage ({ch}, {s})")
            cum *= s
            cums.append(cum)
        if cums[2] != 8 or cums[3] != 16 or cums[4] != 16:
            raise ValueError(
                f"cumulative strides of stages 3..5 must be (8, 16, 16), got {cums[2:]}"
            )

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(ch for ch, _ in self.stages)

    @property
    def cumulative_strides(self) -> tuple[int, ...]:
        out, cum = [], 1
        for _, s in self.stages:
            cum *= s
            out.append(cum)
        return tuple(out)


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1

    @property
    def param_count(self) -> int:
        return self.weight.size + self.bias.size


@dataclass
class DeconvBlock:
    """L2 normalisation (learnable per-channel scale) followed by fixed
    bilinear upsampling."""

    scale: np.ndarray  # (channels,)
    factor: int

    @property
    def param_count(self) -> int:
        return self.scale.size  # upsampling kernels are fixed, not parameters


def _init_conv(rng: np.random.Generator, out_ch: int, in_ch: int, k: int, stride: int = 1) -> ConvLayer:
    fan_in = in_ch * k * k
    bound = 1.0 / math.sqrt(fan_in)
    weight = rng.uniform(-bound, bound, size=(out_ch, in_ch, k, k))
    return ConvLayer(weight, np.zeros(out_ch), stride)


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None,
           stride: int = 1, padding: str = "same") -> np.ndarray:
    """Strided cross-correlation with same-style padding.

    Output spatial size is ceil(input / stride); padding is split evenly with
    the extra row/column at the bottom/right.
    """
    if padding != "same":
        raise ValueError(f"unsupported padding mode {padding!r}")
    c, h, w = x.shape
    out_ch, in_ch, kh, kw = weight.shape
    if in_ch != c:
        raise ValueError(f"input has {c} channels, kernel expects {in_ch}")
    hout = -(-h // stride)
    wout = -(-w // stride)
    pad_h = max((hout - 1) * stride + kh - h, 0)
    pad_w = max((wout - 1) * stride + kw - w, 0)
    xp = np.pad(x, ((0, 0), (pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2)))

    cols = np.empty((c, kh, kw, hout, wout))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i : i + stride * hout : stride, j : j + stride * wout : stride]
    out = weight.reshape(out_ch, -1) @ cols.reshape(c * kh * kw, hout * wout)
    if bias is not None:
        out += bias[:, None]
    return out.reshape(out_ch, hout, wout)


def _apply_conv(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    return conv2d(x, layer.weight, layer.bias, layer.stride)


def _relu(x: np.ndarray) -> np.ndarray:
    # np.where keeps zeros positive, so adding an exactly-zero branch later
    # cannot flip sign bits.
    return np.where(x > 0.0, x, 0.0)


def l2_normalize(x: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Scale each spatial location's channel vector to the given per-channel
    lengths after dividing by its Euclidean norm (epsilon-guarded)."""
    if scale.shape != (x.shape[0],):
        raise ValueError(f"scale shape {scale.shape} does not match {x.shape[0]} channels")
    norms = np.sqrt((x * x).sum(axis=0, keepdims=True))
    return (x / (norms + L2_EPS)) * scale[:, None, None]


def _bilinear_filter(factor: int) -> np.ndarray:
    size = 2 * factor
    center = factor - 0.5
    og = np.arange(size)
    f1 = 1.0 - np.abs(og - center) / factor
    return np.outer(f1, f1)


def upsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear upsampling by 2 or 4 via a fixed transposed convolution.

    The raw transposed convolution is divided by its own response to an
    all-ones input, so constants survive exactly, including at the borders.
    """
    if factor not in (2, 4):
        raise ValueError(f"unsupported upsampling factor {factor}")
    c, h, w = x.shape
    k = _bilinear_filter(factor)
    size = 2 * factor
    pad = factor // 2
    raw = np.zeros((c, (h - 1) * factor + size, (w - 1) * factor + size))
    mass = np.zeros(raw.shape[1:])
    for a in range(size):
        for b in range(size):
            raw[:, a : a + (h - 1) * factor + 1 : factor,
                b : b + (w - 1) * factor + 1 : factor] += x * k[a, b]
            mass[a : a + (h - 1) * factor + 1 : factor,
                 b : b + (w - 1) * factor + 1 : factor] += k[a, b]
    raw = raw[:, pad : pad + h * factor, pad : pad + w * factor]
    mass = mass[pad : pad + h * factor, pad : pad + w * factor]
    return raw / mass


def _apply_deconv(x: np.ndarray, block: DeconvBlock) -> np.ndarray:
    return upsample(l2_normalize(x, block.scale), block.factor)


def nin_fuse(a: np.ndarray, b: np.ndarray, block: ConvLayer) -> np.ndarray:
    """Concatenate two feature maps channel-wise and mix them with a 1x1
    convolution (network-in-network fusion). Purely linear."""
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"spatial mismatch: {a.shape[1:]} vs {b.shape[1:]}")
    return _apply_conv(np.concatenate([a, b], axis=0), block)


def clone_input_conv(layer: ConvLayer) -> ConvLayer:
    """Duplicate a 3-channel entry convolution into a 6-channel one.

    The weight tensor is repeated across the two 3-channel halves; the bias
    is shared, so a stacked pair (x, x) produces twice the single-input
    response plus one bias.
    """
    if layer.weight.shape[1] != 3:
        raise ValueError(
            f"entry convolution must take 3 channels, got {layer.weight.shape[1]}"
        )
    weight = np.concatenate([layer.weight, layer.weight], axis=1)
    return ConvLayer(weight, layer.bias.copy(), layer.stride)


@dataclass
class FusionGraph:
    topology: Topology
    spec: BackboneSpec
    seed: int
    head_channels: int
    vis_tower: list[ConvLayer] = field(default_factory=list)
    ir_tower: list[ConvLayer] = field(default_factory=list)
    shared_tail: list[ConvLayer] = field(default_factory=list)  # halfway fusion stages 4-5
    fuse_blocks: dict[int, ConvLayer] = field(default_factory=dict)  # level -> 1x1 conv
    deconvs: list[DeconvBlock] = field(default_factory=list)  # head input order
    head_conv: ConvLayer | None = None
    pred_center: ConvLayer | None = None
    pred_scale: ConvLayer | None = None
    pred_offset: ConvLayer | None = None

    def param_count(self) -> int:
        return param_count(self)


def _build_stages(
    rng: np.random.Generator, stages: tuple[tuple[int, int], ...], in_ch: int
) -> list[ConvLayer]:
    layers = []
    for out_ch, stride in stages:
        layers.append(_init_conv(rng, out_ch, in_ch, 3, stride))
        in_ch = out_ch
    return layers


def _build_tower(rng: np.random.Generator, spec: BackboneSpec, in_ch: int) -> list[ConvLayer]:
    return _build_stages(rng, spec.stages, in_ch)


def _deconv_factors(spec: BackboneSpec) -> tuple[int, int, int]:
    cums = spec.cumulative_strides
    return tuple(c // HEAD_STRIDE for c in cums[2:])  # type: ignore[return-value]


def build_fusion_graph(
    topology: Topology,
    spec: BackboneSpec | None = None,
    seed: int = 0,
    head_channels: int = DEFAULT_HEAD_CHANNELS,
) -> FusionGraph:
    """Construct the weights and wiring for one topology, deterministically.

    Components are initialised in a fixed order (VIS tower, IR tower, shared
    tail, fusion blocks by level, head, prediction layers) so a given seed
    always yields the same graph. IR imagery enters every tower replicated to
    three channels, matching color-image entry layers.
    """
    spec = spec or BackboneSpec()
    rng = np.random.default_rng(seed)
    g = FusionGraph(topology, spec, seed, head_channels)
    ch = spec.channels
    factors = _deconv_factors(spec)

    if topology in (Topology.VIS_ONLY, Topology.IR_ONLY):
        g.vis_tower = _build_tower(rng, spec, 3)
        level_ch = [ch[2], ch[3], ch[4]]
    elif topology is Topology.INPUT_FUSION:
        g.vis_tower = _build_tower(rng, spec, 3)
        g.vis_tower[0] = clone_input_conv(g.vis_tower[0])
        level_ch = [ch[2], ch[3], ch[4]]
    elif topology is Topology.LATE_FUSION_BASELINE:
        g.vis_tower = _build_tower(rng, spec, 3)
        g.ir_tower = _build_tower(rng, spec, 3)
        level_ch = [ch[2], ch[3], ch[4]] * 2
        factors = factors * 2
    elif topology is Topology.SPARSE_FUSION:
        g.vis_tower = _build_tower(rng, spec, 3)
        g.ir_tower = _build_tower(rng, spec, 3)
        level_ch = [ch[2], ch[3], ch[4]]
    elif topology is Topology.HALFWAY_FUSION:
        g.vis_tower = _build_stages(rng, spec.stages[:3], 3)
        g.ir_tower = _build_stages(rng, spec.stages[:3], 3)
        g.shared_tail = _build_stages(rng, spec.stages[3:], ch[2])
        g.fuse_blocks[3] = _init_conv(rng, ch[2], 2 * ch[2], 1)
        level_ch = [ch[2], ch[3], ch[4]]
    elif topology is Topology.LATE_FUSION:
        g.vis_tower = _build_tower(rng, spec, 3)
        g.ir_tower = _build_tower(rng, spec, 3)
        for level, c in ((3, ch[2]), (4, ch[3]), (5, ch[4])):
            g.fuse_blocks[level] = _init_conv(rng, c, 2 * c, 1)
        level_ch = [ch[2], ch[3], ch[4]]
    else:
        raise ValueError(f"unknown topology {topology}")

    g.deconvs = [
        DeconvBlock(np.full(c, L2_SCALE_INIT), f) for c, f in zip(level_ch, factors)
    ]
    g.head_conv = _init_conv(rng, head_channels, sum(level_ch), 3)
    g.pred_center = _init_conv(rng, 1, head_channels, 1)
    g.pred_scale = _init_conv(rng, 1, head_channels, 1)
    g.pred_offset = _init_conv(rng, 2, head_channels, 1)
    return g


def _run_stages(x: np.ndarray, layers: list[ConvLayer]) -> list[np.ndarray]:
    feats = []
    for layer in layers:
        x = _relu(_apply_conv(x, layer))
        feats.append(x)
    return feats


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Clipped so the squashed map stays strictly inside (0, 1).
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def _ir_as_rgb(ir: np.ndarray) -> np.ndarray:
    if ir.shape[0] == 1:
        return np.repeat(ir, 3, axis=0)
    if ir.shape[0] == 3:
        return ir
    raise ValueError(f"IR input must have 1 channel, got {ir.shape[0]}")


def forward(graph: FusionGraph, vis: np.ndarray | None, ir: np.ndarray | None) -> TargetMaps:
    """Run one image pair through the graph and return predicted maps.

    Inputs are (channels, H, W) arrays with H and W divisible by 16; the
    unused modality of a single-modality topology may be None. The center
    plane is squashed into (0, 1); scale and offset stay raw. All planes have
    spatial shape (H/4, W/4).
    """
    topo = graph.topology
    primary = ir if topo is Topology.IR_ONLY else vis
    if primary is None:
        raise ValueError("required input is missing")
    h, w = primary.shape[1], primary.shape[2]
    if h % 16 or w % 16:
        raise ValueError(f"input size {h}x{w} must be divisible by 16")

    if topo is Topology.VIS_ONLY:
        _check_channels(vis, 3)
        feats = _run_stages(vis, graph.vis_tower)
        levels = feats[2:]
    elif topo is Topology.IR_ONLY:
        levels = _run_stages(_ir_as_rgb(ir), graph.vis_tower)[2:]
    elif topo is Topology.INPUT_FUSION:
        _check_pair(vis, ir, h, w)
        stacked = np.concatenate([vis, _ir_as_rgb(ir)], axis=0)
        levels = _run_stages(stacked, graph.vis_tower)[2:]
    elif topo is Topology.LATE_FUSION_BASELINE:
        _check_pair(vis, ir, h, w)
        vis_feats = _run_stages(vis, graph.vis_tower)
        ir_feats = _run_stages(_ir_as_rgb(ir), graph.ir_tower)
        levels = vis_feats[2:] + ir_feats[2:]
    elif topo is Topology.SPARSE_FUSION:
        _check_pair(vis, ir, h, w)
        x_vis, x_ir = vis, _ir_as_rgb(ir)
        levels = []
        for i, (vl, il) in enumerate(zip(graph.vis_tower, graph.ir_tower)):
            x_ir = _relu(_apply_conv(x_ir, il))
            x_vis = _relu(_apply_conv(x_vis, vl)) + x_ir
            if i >= 2:
                levels.append(x_vis)
    elif topo is Topology.HALFWAY_FUSION:
        _check_pair(vis, ir, h, w)
        vis3 = _run_stages(vis, graph.vis_tower)[-1]
        ir3 = _run_stages(_ir_as_rgb(ir), graph.ir_tower)[-1]
        fused = nin_fuse(vis3, ir3, graph.fuse_blocks[3])
        levels = [fused] + _run_stages(fused, graph.shared_tail)
    elif topo is Topology.LATE_FUSION:
        _check_pair(vis, ir, h, w)
        vis_feats = _run_stages(vis, graph.vis_tower)
        ir_feats = _run_stages(_ir_as_rgb(ir), graph.ir_tower)
        levels = [
            nin_fuse(vis_feats[i], ir_feats[i], graph.fuse_blocks[i + 1])
            for i in (2, 3, 4)
        ]
    else:
        raise ValueError(f"unknown topology {topo}")

    upsampled = [_apply_deconv(x, blk) for x, blk in zip(levels, graph.deconvs)]
    head_in = np.concatenate(upsampled, axis=0)
    head = _relu(_apply_conv(head_in, graph.head_conv))
    center = _sigmoid(_apply_conv(head, graph.pred_center))[0]
    scale = _apply_conv(head, graph.pred_scale)[0]
    offset = np.moveaxis(_apply_conv(head, graph.pred_offset), 0, -1)
    return TargetMaps(center, scale, offset.copy())


def _check_channels(x: np.ndarray, expected: int) -> None:
    if x is None or x.ndim != 3 or x.shape[0] != expected:
        raise ValueError(f"expected a ({expected}, H, W) input")


def _check_pair(vis: np.ndarray, ir: np.ndarray, h: int, w: int) -> None:
    _check_channels(vis, 3)
    if ir is None or ir.ndim != 3 or ir.shape[0] not in (1, 3):
        raise ValueError("expected a (1, H, W) IR input")
    if vis.shape[1:] != (h, w) or ir.shape[1:] != (h, w):
        raise ValueError(f"VIS {vis.shape[1:]} and IR {ir.shape[1:]} sizes disagree")


def param_count(graph: FusionGraph) -> int:
    """Total learnable scalars: convolution weights and biases, fusion blocks,
    and L2-normalisation scales. Fixed bilinear kernels are excluded."""
    total = 0
    for layer in (
        graph.vis_tower
        + graph.ir_tower
        + graph.shared_tail
        + [graph.fuse_blocks[k] for k in sorted(graph.fuse_blocks)]
        + [graph.head_conv, graph.pred_center, graph.pred_scale, graph.pred_offset]
    ):
        if layer is not None:
            total += layer.param_count
    for blk in graph.deconvs:
        total += blk.param_count
    return total


def graph_report(graph: FusionGraph, input_size: tuple[int, int] | None = None) -> str:
    """Plain-text summary: topology, layer shapes, parameter count, and (when
    an input size is given) the resulting head map shape."""
    lines = [
        f"topology: {graph.topology.value}",
        f"seed: {graph.seed}",
        f"backbone channels: {graph.spec.channels}",
        f"backbone cumulative strides: {graph.spec.cumulative_strides}",
    ]

    def conv_line(name: str, layer: ConvLayer) -> str:
        o, i, kh, kw = layer.weight.shape
        return (
            f"  {name}: conv {kh}x{kw} {i}->{o} stride {layer.stride} "
            f"({layer.param_count} params)"
        )

    for name, tower in (("vis", graph.vis_tower), ("ir", graph.ir_tower)):
        for idx, layer in enumerate(tower, start=1):
            lines.append(conv_line(f"{name} stage {idx}", layer))
    for idx, layer in enumerate(graph.shared_tail, start=4):
        lines.append(conv_line(f"shared stage {idx}", layer))
    for level in sorted(graph.fuse_blocks):
        lines.append(conv_line(f"fusion block L{level}", graph.fuse_blocks[level]))
    for i, blk in enumerate(graph.deconvs):
        lines.append(
            f"  deconv {i}: l2-norm scale x{blk.scale.size}, bilinear x{blk.factor}"
        )
    lines.append(conv_line("head", graph.head_conv))
    lines.append(conv_line("pred center", graph.pred_center))
    lines.append(conv_line("pred scale", graph.pred_scale))
    lines.append(conv_line("pred offset", graph.pred_offset))
    lines.append(f"total parameters: {param_count(graph)}")
    if input_size is not None:
        h, w = input_size
        lines.append(f"input: {h}x{w}")
        lines.append(f"head maps: {h // HEAD_STRIDE}x{w // HEAD_STRIDE}")
    return "\n".join(lines)
