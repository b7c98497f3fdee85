"""The detection objective on perfect, noisy, and empty predictions, plus a
spot check of one analytic gradient entry against a finite difference.

Run from the repository root:  python3 demos/02_detection_loss.py
"""

import numpy as np

from mscsp import (
    Annotation,
    BBox,
    ImageSize,
    Label,
    Occlusion,
    TargetMaps,
    encode_targets,
    total_loss,
)

rng = np.random.default_rng(7)
size = ImageSize(width=128, height=96)
target = encode_targets(
    [
        Annotation(BBox(30.0, 20.0, 16.4, 40.0), Label.PERSON, Occlusion.NONE),
        Annotation(BBox(80.0, 40.0, 20.5, 50.0), Label.PERSON, Occlusion.NONE),
    ],
    size,
)

perfect = TargetMaps(
    np.clip(target.center, 1e-9, 1 - 1e-9), target.scale.copy(), target.offset.copy()
)
noisy = TargetMaps(
    np.clip(target.center + rng.normal(0, 0.1, target.center.shape), 1e-6, 1 - 1e-6),
    target.scale + rng.normal(0, 0.5, target.scale.shape),
    target.offset + rng.normal(0, 0.2, target.offset.shape),
)
blank = TargetMaps(
    np.full(target.center.shape, 0.5),
    np.zeros(target.scale.shape),
    np.zeros(target.offset.shape),
)

print(f"{'prediction':<10}{'total':>10}{'center':>10}{'scale':>10}{'offset':>10}")
for name, pred in (("perfect", perfect), ("noisy", noisy), ("blank", blank)):
    res = total_loss(pred, target)
    print(f"{name:<10}{res.total:>10.4f}{res.center:>10.4f}{res.scale:>10.4f}{res.offset:>10.4f}")

print("\ngradient spot check on one center cell (analytic vs central difference):")
res = total_loss(noisy, target)
r, c = np.argwhere(target.positive_mask)[0]
step = 1e-6
orig = noisy.center[r, c]
noisy.center[r, c] = orig + step
hi = total_loss(noisy, target).total
noisy.center[r, c] = orig - step
lo = total_loss(noisy, target).total
noisy.center[r, c] = orig
fd = (hi - lo) / (2 * step)
print(f"  analytic {res.grad_center[r, c]:+.10f}")
print(f"  numeric  {fd:+.10f}")
print(f"  |diff|   {abs(res.grad_center[r, c] - fd):.3e}")
