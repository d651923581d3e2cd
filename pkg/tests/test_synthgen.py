import hashlib
import math
from pathlib import Path

import numpy as np
import pytest

from petbench.synthgen import (
    GenConfig,
    SubjectLatent,
    gen_dataset,
    gen_session,
    make_gaze,
    render_eye,
    sample_subject,
)


def _quiet_subject(**overrides):
    base = dict(
        subject_id=0,
        gain=np.ones(4),
        offset=np.zeros(4),
        texture_phase=np.array([0.3, 1.1, 2.0, 0.7]),
        occlusion_frac=0.0,
        noise_sigma=0.0,
    )
    base.update(overrides)
    return SubjectLatent(**base)


class TestSubjectSampling:
    def test_deterministic(self):
        a = sample_subject(11, 3)
        b = sample_subject(11, 3)
        np.testing.assert_array_equal(a.gain, b.gain)
        np.testing.assert_array_equal(a.offset, b.offset)
        np.testing.assert_array_equal(a.texture_phase, b.texture_phase)
        assert a.occlusion_frac == b.occlusion_frac
        assert a.noise_sigma == b.noise_sigma

    def test_neighboring_ids_differ(self):
        differing = 0
        for sid in range(100):
            a = sample_subject(5, sid)
            b = sample_subject(5, sid + 1)
            if not np.array_equal(a.gain, b.gain) or a.occlusion_frac != b.occlusion_frac:
                differing += 1
        assert differing >= 99

    def test_bounds_over_many_draws(self):
        gains = np.concatenate([sample_subject(9, i).gain for i in range(250)])
        assert gains.min() >= 0.8
        assert gains.max() <= 1.2
        occ = [sample_subject(9, i).occlusion_frac for i in range(250)]
        assert min(occ) >= 0.0 and max(occ) <= 0.35

    def test_latent_validation(self):
        with pytest.raises(ValueError):
            _quiet_subject(gain=np.full(4, 1.5))
        with pytest.raises(ValueError):
            _quiet_subject(offset=np.array([0.0, 0.0, 0.0, 9.0]))
        with pytest.raises(ValueError):
            _quiet_subject(occlusion_frac=0.5)


class TestRenderEye:
    def test_bit_identical(self):
        subj = sample_subject(2, 0)
        a = render_eye(subj, "left", 5.0, -3.0, 77)
        b = render_eye(subj, "left", 5.0, -3.0, 77)
        np.testing.assert_array_equal(a.intensity, b.intensity)
        np.testing.assert_array_equal(a.dolp, b.dolp)
        np.testing.assert_array_equal(a.aolp, b.aolp)

    def test_dolp_within_generator_bound(self):
        subj = sample_subject(3, 1)
        ida = render_eye(subj, "right", -12.0, 8.0, 5)
        assert ida.dolp.min() >= 0.0
        assert ida.dolp.max() <= 0.5

    def test_out_of_range_gaze_rejected(self):
        subj = _quiet_subject()
        with pytest.raises(ValueError):
            render_eye(subj, "left", 26.0, 0.0, 0)
        with pytest.raises(ValueError):
            render_eye(subj, "left", 0.0, -30.0, 0)
        with pytest.raises(ValueError):
            render_eye(subj, "up", 0.0, 0.0, 0)

    def test_high_pitch_blob_fully_occluded(self):
        subj = _quiet_subject(occlusion_frac=0.35)
        ida = render_eye(subj, "right", 0.0, 20.0, 0)
        # inspect only the rows the eyelid leaves visible
        occ_rows = int(0.35 * 32)
        visible = ida.intensity[occ_rows:, :]
        assert visible.max() <= 0.85 + 1e-9
        # blob is hidden: visible rows are within Gaussian-tail distance of
        # plain sclera
        assert 0.85 - visible.min() < 0.05

    def test_occlusion_shifts_gaze_information_to_dolp(self):
        # in the regime where the eyelid hides the blob, pitch must stay
        # readable from dolp but not from intensity (sensor noise drowns
        # the blob's sub-eyelid Gaussian tail)
        subj = _quiet_subject(occlusion_frac=0.35, noise_sigma=0.02)
        pitches = np.linspace(15.0, 25.0, 200)
        intens = []
        dolps = []
        for f, p in enumerate(pitches):
            ida = render_eye(subj, "right", 0.0, float(p), f)
            intens.append(ida.intensity.ravel())
            dolps.append(ida.dolp.ravel())
        intens = np.array(intens)
        dolps = np.array(dolps)

        def mean_abs_corr(stack):
            centered = stack - stack.mean(axis=0)
            p_c = pitches - pitches.mean()
            denom = np.sqrt((centered**2).sum(axis=0) * (p_c**2).sum())
            num = centered.T @ p_c
            with np.errstate(invalid="ignore", divide="ignore"):
                r = np.where(denom > 0, num / np.maximum(denom, 1e-300), 0.0)
            return np.mean(np.abs(r))

        assert mean_abs_corr(intens) < mean_abs_corr(dolps)

    def test_left_right_differ(self):
        subj = sample_subject(4, 2)
        left = render_eye(subj, "left", 6.0, 1.0, 9)
        right = render_eye(subj, "right", 6.0, 1.0, 9)
        assert np.abs(left.intensity - right.intensity).mean() > 1e-4


class TestSessions:
    def test_ring_targets_and_jitter(self):
        cfg = GenConfig(n_subjects=1, frames_per_subject=4, calib_frames=100)
        subj = _quiet_subject()
        frames = gen_session(subj, 100, "ring", cfg)
        assert len(frames) == 100
        centers = set()
        for f, (_, _, gaze) in enumerate(frames):
            angle = 2.0 * math.pi * (f % 9) / 9
            cy, cp = cfg.ring_radius_deg * math.cos(angle), cfg.ring_radius_deg * math.sin(angle)
            assert abs(gaze[0] - cy) <= 0.2 + 1e-12
            assert abs(gaze[1] - cp) <= 0.2 + 1e-12
            centers.add(f % 9)
        assert len(centers) == 9

    def test_ring_max_chord(self):
        cfg = GenConfig(n_subjects=1, frames_per_subject=4)
        angles = [2.0 * math.pi * k / cfg.calib_targets for k in range(cfg.calib_targets)]
        pts = np.array(
            [
                (cfg.ring_radius_deg * math.cos(a), cfg.ring_radius_deg * math.sin(a))
                for a in angles
            ]
        )
        dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        assert abs(dists.max() - 27.575) <= 1e-3

    def test_uniform_within_range(self):
        cfg = GenConfig(n_subjects=1, frames_per_subject=4, gaze_range_deg=15.0, ring_radius_deg=10.0)
        subj = _quiet_subject()
        for _, _, gaze in gen_session(subj, 50, "uniform", cfg):
            assert np.all(np.abs(gaze) <= 15.0)

    def test_empty_session_rejected(self):
        cfg = GenConfig(n_subjects=1, frames_per_subject=4)
        with pytest.raises(ValueError):
            gen_session(_quiet_subject(), 0, "uniform", cfg)
        with pytest.raises(ValueError):
            gen_session(_quiet_subject(), 5, "spiral", cfg)


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestDataset:
    CFG = dict(n_subjects=2, frames_per_subject=6, image_size=16, calib_frames=5, master_seed=7)

    def test_regeneration_is_byte_identical(self, tmp_path):
        cfg = GenConfig(**self.CFG)
        gen_dataset(cfg, tmp_path / "a")
        gen_dataset(cfg, tmp_path / "b")
        assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")

    def test_refuses_nonempty_dir(self, tmp_path):
        out = tmp_path / "d"
        out.mkdir()
        (out / "junk.txt").write_text("x")
        with pytest.raises(FileExistsError):
            gen_dataset(GenConfig(**self.CFG), out)
        gen_dataset(GenConfig(**self.CFG), out, overwrite=True)
        assert (out / "manifest.json").exists()
        assert not (out / "junk.txt").exists()

    def test_labels_within_range(self, tmp_path):
        from petbench.dataio import load_manifest

        gen_dataset(GenConfig(**self.CFG), tmp_path / "d")
        man = load_manifest(tmp_path / "d")
        assert man.subject_ids() == [0, 1]
        for sid in man.subject_ids():
            for session in ("main", "calib"):
                labels = man.labels(sid, session)
                assert np.all(np.abs(labels) <= 25.0)


class TestGenerativeStructure:
    def test_gaze_nearest_neighbor_ordering(self):
        # noise-free renders must order by gaze distance in image space
        # probes span less than half the dolp texture period so image
        # distance is monotone in gaze distance over the set
        subj = _quiet_subject(occlusion_frac=0.1)
        yaws = [-6.0, -2.0, 1.0, 3.0, 6.0]
        imgs = []
        for y in yaws:
            ida = render_eye(subj, "right", y, 0.0, 0)
            imgs.append(np.concatenate([ida.intensity.ravel(), ida.dolp.ravel(), ida.aolp.ravel()]))
        imgs = np.array(imgs)
        for i in range(len(yaws)):
            d = np.linalg.norm(imgs - imgs[i], axis=1)
            d[i] = np.inf
            nn = int(np.argmin(d))
            gaze_d = [abs(yaws[j] - yaws[i]) if j != i else np.inf for j in range(len(yaws))]
            assert nn == int(np.argmin(gaze_d))

    def test_subjects_look_different_at_same_gaze(self):
        subjects = [sample_subject(21, i) for i in range(15)]
        renders = [render_eye(s, "left", 4.0, -2.0, 123).dolp for s in subjects]
        distinct = 0
        total = 0
        for i in range(len(renders)):
            for j in range(i + 1, len(renders)):
                total += 1
                if np.abs(renders[i] - renders[j]).mean() > 0.005:
                    distinct += 1
        assert distinct >= total - 1

    def test_make_gaze_layout(self):
        g = make_gaze(3.0, -1.5)
        np.testing.assert_array_equal(g, [3.0, -1.5, 3.0, -1.5])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GenConfig(n_subjects=0, frames_per_subject=1)
        with pytest.raises(ValueError):
            GenConfig(n_subjects=1, frames_per_subject=1, image_size=17)
        with pytest.raises(ValueError):
            GenConfig(n_subjects=1, frames_per_subject=1, image_size=512)
        with pytest.raises(ValueError):
            GenConfig(n_subjects=1, frames_per_subject=1, calib_targets=1)
        with pytest.raises(ValueError):
            GenConfig(n_subjects=1, frames_per_subject=1, ring_radius_deg=25.0)
