"""Train the absolute and the differential gaze models side by side.

Generates a small dataset, trains the baseline head (image pair ->
absolute gaze) and the siamese head (query + reference -> gaze
displacement) with identical budgets, and plots both loss curves along
with the held-out p50 angular error probes the trainer logs. The
differential model is evaluated with anchor references from the held-out
subjects' calibration session, which is what makes it a personalized
predictor.

Runtime is about half a minute. Run from the repository root:
python3 demos/03_training_differential_model.py
"""

import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from petbench.dataio import Split, load_manifest
from petbench.polarization import Modality
from petbench.synthgen import GenConfig, gen_dataset
from petbench.train import TrainConfig, train

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)


def main():
    cfg = GenConfig(
        n_subjects=6,
        frames_per_subject=60,
        image_size=32,
        master_seed=5,
        calib_frames=20,
        calib_targets=9,
    )
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp) / "data"
        gen_dataset(cfg, root)
        manifest = load_manifest(root)
        split = Split(train_ids=(0, 1, 2, 3), test_ids=(4, 5))

        logs = {}
        for kind in ("baseline", "siamese"):
            tc = TrainConfig(
                kind=kind,
                modality=Modality.POLARIZATION3,
                steps=400,
                batch_size=16,
                seed=3,
                eval_interval=40,
                eval_frames=30,
            )
            model, log = train(tc, manifest, split)
            logs[kind] = log
            print(f"{kind:>8}: final loss {log[-1]['loss']:.4f}, probe p50 {log[-1]['eval_p50']:.3f} deg")

    fig, (ax_loss, ax_err) = plt.subplots(1, 2, figsize=(10, 4))
    for kind, log in logs.items():
        steps = [row["step"] for row in log]
        ax_loss.plot(steps, [row["loss"] for row in log], label=kind)
        ax_err.plot(steps, [row["eval_p50"] for row in log], label=kind)
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel("training loss")
    ax_loss.legend()
    ax_err.set_xlabel("step")
    ax_err.set_ylabel("held-out p50 angular error [deg]")
    ax_err.legend()
    fig.tight_layout()
    path = OUT / "03_training_differential_model.png"
    fig.savefig(path, dpi=110)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
