"""Score two synthetic detectors with the miss rate / FPPI protocol and save
the operating curves to demos/output/mr_fppi.png.

Run from the repository root:  python3 demos/05_evaluation.py
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mscsp import (
    ALL_SUBSET,
    Annotation,
    BBox,
    Detection,
    Label,
    Occlusion,
    REASONABLE_SUBSET,
    evaluate,
    render_report,
)

rng = np.random.default_rng(123)

# ground truth: 40 frames with 0-3 pedestrians each
gts = {}
for i in range(40):
    frame = []
    for _ in range(int(rng.integers(0, 4))):
        h = float(rng.uniform(25, 120))
        frame.append(
            Annotation(
                BBox(rng.uniform(0, 400), rng.uniform(0, 250), 0.41 * h, h),
                Label.PERSON,
                Occlusion(int(rng.integers(0, 3))),
            )
        )
    gts[f"frame{i:03d}"] = frame


def simulated_detector(jitter, miss_rate, fp_rate):
    """Jittered copies of the truth plus uniformly scattered false alarms."""
    dets = {}
    for frame, anns in gts.items():
        out = []
        for ann in anns:
            if rng.random() < miss_rate * (30 / max(ann.box.h, 30)):
                continue
            b = ann.box
            out.append(
                Detection(
                    BBox(
                        b.x + rng.normal(0, jitter),
                        b.y + rng.normal(0, jitter),
                        max(2.0, b.w + rng.normal(0, jitter)),
                        max(4.0, b.h + rng.normal(0, jitter)),
                    ),
                    float(np.clip(rng.uniform(0.5, 1.0), 0, 1)),
                )
            )
        for _ in range(rng.poisson(fp_rate)):
            h = float(rng.uniform(20, 90))
            out.append(
                Detection(
                    BBox(rng.uniform(0, 400), rng.uniform(0, 250), 0.41 * h, h),
                    float(rng.uniform(0.05, 0.9)),
                )
            )
        dets[frame] = out
    return dets


detectors = {
    "sharp": simulated_detector(jitter=1.5, miss_rate=0.1, fp_rate=0.7),
    "sloppy": simulated_detector(jitter=5.0, miss_rate=0.35, fp_rate=2.5),
}

fig, ax = plt.subplots(figsize=(5, 4))
for name, dets in detectors.items():
    report = evaluate(dets, gts, [REASONABLE_SUBSET, ALL_SUBSET])
    print(f"=== {name} ===")
    print(render_report(report))
    print()
    pts = report.curves["Reasonable"].points
    ax.plot(
        [max(f, 1e-4) for f, _ in pts],
        [max(m, 1e-4) for _, m in pts],
        drawstyle="steps-post",
        label=f"{name} (MR {report.subset_mr['Reasonable']:.1f}%)",
    )

ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("false positives per image")
ax.set_ylabel("miss rate")
ax.set_title("Reasonable subset")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()

out_path = Path(__file__).parent / "output" / "mr_fppi.png"
out_path.parent.mkdir(exist_ok=True)
fig.savefig(out_path, dpi=130)
print(f"wrote {out_path}")
