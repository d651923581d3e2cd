"""Generate a small synthetic dataset and look at what is inside it.

Writes a few subjects to a temporary directory, then shows (a) one
subject's eye appearance across a yaw sweep, (b) the same gaze rendered
for three different subjects, and (c) the eyelid occlusion effect at
high pitch, where the intensity blob disappears but the polarization
channels keep varying. Prints the manifest layout and the calibration
ring geometry.

Run from the repository root:  python3 demos/02_synthetic_eye_dataset.py
"""

import tempfile
from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from petbench.dataio import SampleLoader, load_manifest
from petbench.polarization import Modality
from petbench.synthgen import GenConfig, gen_dataset, render_eye, sample_subject

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)


def main():
    cfg = GenConfig(
        n_subjects=3,
        frames_per_subject=20,
        image_size=32,
        master_seed=11,
        calib_frames=18,
        calib_targets=9,
    )
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp) / "data"
        gen_dataset(cfg, root)
        manifest = load_manifest(root)

        print(f"subjects: {manifest.subject_ids()}")
        for sid in manifest.subject_ids():
            n_main = manifest.n_frames(sid, "main")
            n_calib = manifest.n_frames(sid, "calib")
            print(f"  S{sid:04d}: {n_main} main + {n_calib} calib frames")

        labels = manifest.labels(0, "calib")
        radii = np.hypot(labels[:, 0], labels[:, 1])
        print(f"calibration gaze radii: min {radii.min():.2f}, max {radii.max():.2f} deg")

        loader = SampleLoader(manifest, Modality.POLARIZATION3)
        left, right, y = loader.arrays(0, "main")
        print(f"loaded tensors: left {left.shape}, labels {y.shape}")

    # appearance sweeps rendered directly, without touching disk
    subjects = [sample_subject(11, i) for i in range(3)]
    yaws = [-16.0, -8.0, 0.0, 8.0, 16.0]
    pitches = [0.0, 8.0, 14.0, 20.0]

    fig, axes = plt.subplots(3, len(yaws), figsize=(11, 6.5))
    for row, (title, imgs) in enumerate(
        (
            ("S0 yaw sweep", [render_eye(subjects[0], "left", yw, 0.0, 1).intensity for yw in yaws]),
            ("same gaze, 3 subjects + S0", [render_eye(s, "left", 8.0, -4.0, 1).intensity for s in subjects]
             + [render_eye(subjects[0], "right", 8.0, -4.0, 1).intensity, render_eye(subjects[0], "left", 8.0, -4.0, 2).intensity]),
            ("S1 pitch sweep (lid occludes)", [render_eye(subjects[1], "left", 0.0, p, 1).intensity for p in pitches]
             + [render_eye(subjects[1], "left", 0.0, 20.0, 1).dolp]),
        )
    ):
        for col, img in enumerate(imgs[: len(yaws)]):
            axes[row, col].imshow(img, cmap="gray" if row != 2 or col < len(pitches) else "viridis")
            axes[row, col].set_xticks([])
            axes[row, col].set_yticks([])
        axes[row, 0].set_ylabel(title, fontsize=8)
    axes[2, len(pitches)].set_title("dolp @ pitch 20", fontsize=8)
    fig.tight_layout()
    path = OUT / "02_synthetic_eye_dataset.png"
    fig.savefig(path, dpi=110)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
