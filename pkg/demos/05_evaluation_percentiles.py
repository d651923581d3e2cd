"""How the benchmark scores a model: angular errors and percentiles.

Shows the two ingredients of every reported number. First the binocular
angular error: gaze angles become 3-D unit vectors per eye and the error
is the mean angle between predicted and true directions. Second the
percentile convention (linear interpolation between order statistics),
pinned on a tiny example where the answers are obvious. Then it scores
two quick models on the same held-out subjects and prints the aligned
comparison table the command line tool produces.

Runtime is about a minute. Run from the repository root:
python3 demos/05_evaluation_percentiles.py
"""

import tempfile
from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from petbench.dataio import SampleLoader, Split, load_manifest
from petbench.evaluation import (
    EvalOptions,
    angular_error,
    collect_errors,
    compare_runs,
    make_report,
    percentile,
)
from petbench.polarization import Modality
from petbench.synthgen import GenConfig, gen_dataset
from petbench.train import TrainConfig, train

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)


def main():
    # 1 deg of pure yaw error on both eyes is exactly 1 deg of angular error
    err = angular_error(np.array([1.0, 0.0, 1.0, 0.0]), np.zeros(4))
    print(f"angular error of 1 deg yaw offset: {err:.6f} deg")
    vals = [1.0, 2.0, 3.0, 4.0, 5.0]
    print(f"percentiles of {vals}: p50={percentile(vals, 50)}, p75={percentile(vals, 75)}, p95={percentile(vals, 95)}")

    cfg = GenConfig(
        n_subjects=6,
        frames_per_subject=60,
        image_size=32,
        master_seed=29,
        calib_frames=20,
        calib_targets=9,
    )
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp) / "data"
        gen_dataset(cfg, root)
        manifest = load_manifest(root)
        split = Split(train_ids=(0, 1, 2, 3), test_ids=(4, 5))
        loader = SampleLoader(manifest, Modality.POLARIZATION3)

        named = []
        errors = {}
        for kind in ("baseline", "siamese"):
            tc = TrainConfig(
                kind=kind,
                modality=Modality.POLARIZATION3,
                steps=500,
                batch_size=16,
                seed=7,
                eval_interval=250,
                eval_frames=30,
            )
            model, _ = train(tc, manifest, split)
            opts = EvalOptions(
                kind=kind,
                modality=tc.modality,
                anchors=9 if kind == "siamese" else None,
                seed=0,
            )
            records = collect_errors(model, loader, split.test_ids, opts)
            errors[kind] = [r.error for r in records]
            named.append((kind, make_report(records)))

        summary, table = compare_runs(named)
        print()
        print(table)

    fig, ax = plt.subplots(figsize=(7, 4))
    bins = np.linspace(0.0, max(max(v) for v in errors.values()), 40)
    for kind, v in errors.items():
        ax.hist(v, bins=bins, alpha=0.55, label=kind)
        for p, ls in ((50, "-"), (95, "--")):
            ax.axvline(percentile(v, p), ls=ls, lw=1.0,
                       color="C0" if kind == "baseline" else "C1")
    ax.set_xlabel("angular error [deg]")
    ax.set_ylabel("frames")
    ax.legend(title="solid p50, dashed p95")
    fig.tight_layout()
    path = OUT / "05_evaluation_percentiles.png"
    fig.savefig(path, dpi=110)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
