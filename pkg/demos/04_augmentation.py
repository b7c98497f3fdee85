"""Apply the multispectral augmentation stages to a synthetic VIS/IR pair and
save a before/after gallery to demos/output/augmentation.png.

Run from the repository root:  python3 demos/04_augmentation.py
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mscsp import (
    Annotation,
    AugmentConfig,
    BBox,
    ImagePair,
    Label,
    NoiseConfig,
    Occlusion,
    apply_pipeline,
)


def synthetic_pair(h=96, w=128):
    """A gradient scene with two bright 'pedestrians' visible in both bands."""
    yy, xx = np.mgrid[0:h, 0:w]
    base = 0.25 + 0.5 * (xx / w)
    vis = np.stack([base, 0.9 - 0.4 * (yy / h), np.full((h, w), 0.35)])
    ir = (0.2 + 0.3 * (yy / h))[None]
    anns = []
    for cx, cy, bh in ((40, 50, 40), (95, 60, 28)):
        bw = 0.41 * bh
        x, y = cx - bw / 2, cy - bh / 2
        vis[:, int(y) : int(y + bh), int(x) : int(x + bw)] = 0.85
        ir[:, int(y) : int(y + bh), int(x) : int(x + bw)] = 0.95
        anns.append(Annotation(BBox(x, y, bw, bh), Label.PERSON, Occlusion.NONE))
    return ImagePair(np.clip(vis, 0, 1), np.clip(ir, 0, 1), anns)


pair = synthetic_pair()
cfg = AugmentConfig(
    target_size=(96, 128),
    noise=NoiseConfig(probability=1.0, vis_model="gaussian", ir_model="salt_pepper"),
)

variants = [("original", pair)]
for stages, seed in (
    (["geometric"], 3),
    (["erasing-sync"], 5),
    (["masking"], 5),
    (["noise"], 5),
    (["geometric", "erasing-sync", "masking", "noise"], 1),
):
    log: list = []
    out = apply_pipeline(pair, cfg, stages, seed=seed, param_log=log)
    variants.append(("+".join(stages), out))
    drawn = ", ".join(
        f"{e['stage']}/{e['modality']}: "
        + " ".join(f"{k}={v}" for k, v in e.items() if k not in ("stage", "modality"))
        for e in log
    )
    print(f"{'+'.join(stages):<42} {drawn}")

fig, axes = plt.subplots(2, len(variants), figsize=(3 * len(variants), 5.2))
for col, (name, p) in enumerate(variants):
    axes[0, col].imshow(np.moveaxis(p.vis, 0, -1))
    axes[1, col].imshow(p.ir[0], cmap="inferno", vmin=0, vmax=1)
    axes[0, col].set_title(name, fontsize=8)
    for ann in p.annotations:
        for row in (0, 1):
            b = ann.box
            axes[row, col].add_patch(
                plt.Rectangle((b.x, b.y), b.w, b.h, fill=False, color="lime", lw=1)
            )
    for row in (0, 1):
        axes[row, col].set_xticks([])
        axes[row, col].set_yticks([])
axes[0, 0].set_ylabel("VIS")
axes[1, 0].set_ylabel("IR")
fig.tight_layout()

out_path = Path(__file__).parent / "output" / "augmentation.png"
out_path.parent.mkdir(exist_ok=True)
fig.savefig(out_path, dpi=130)
print(f"\nwrote {out_path}")
