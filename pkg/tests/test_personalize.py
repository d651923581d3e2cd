import numpy as np
import pytest

from petbench.dataio import BinocularSample
from petbench.errors import DataError
from petbench.net import init_params
from petbench.personalize import (
    AXIS_NAMES,
    AnchorSet,
    LinearCalib,
    apply_linear_calib,
    fit_linear_calib,
    predict_with_anchors,
    select_anchors,
)


def _frame(label, size=32):
    return BinocularSample(
        left=np.zeros((1, size, size)),
        right=np.zeros((1, size, size)),
        label=np.asarray(label, dtype=np.float64),
    )


def _pool(n):
    return [_frame([i, 0, i, 0]) for i in range(n)]


class TestAnchorSelection:
    def test_distinct_sorted_deterministic(self):
        pool = _pool(100)
        a = select_anchors(pool, 9, 123)
        b = select_anchors(pool, 9, 123)
        assert a.count == 9
        assert len(set(a.frame_ids)) == 9
        assert list(a.frame_ids) == sorted(a.frame_ids)
        assert a.frame_ids == b.frame_ids

    def test_sweep_is_nested(self):
        pool = _pool(50)
        prev = set()
        for c in (1, 3, 5, 7, 9):
            ids = set(select_anchors(pool, c, 7).frame_ids)
            assert prev <= ids
            prev = ids

    def test_bounds(self):
        pool = _pool(5)
        with pytest.raises(ValueError):
            select_anchors(pool, 0, 0)
        with pytest.raises(ValueError):
            select_anchors(pool, 6, 0)
        assert select_anchors(pool, 5, 0).frame_ids == (0, 1, 2, 3, 4)

    def test_subject_id_carried(self):
        a = select_anchors(_pool(4), 2, 0, subject_id=17)
        assert a.subject_id == 17

    def test_anchor_set_validation(self):
        f = _frame([0, 0, 0, 0])
        with pytest.raises(ValueError):
            AnchorSet(samples=(), frame_ids=())
        with pytest.raises(ValueError):
            AnchorSet(samples=(f, f), frame_ids=(0,))
        with pytest.raises(ValueError):
            AnchorSet(samples=(f, f), frame_ids=(1, 1))

    def test_labels_stack(self):
        a = AnchorSet(samples=(_frame([1, 2, 3, 4]), _frame([5, 6, 7, 8])), frame_ids=(0, 1))
        np.testing.assert_array_equal(a.labels(), [[1, 2, 3, 4], [5, 6, 7, 8]])


def _zero_params(bias=None):
    p = init_params(0, 1, 32)
    arrays = [np.zeros_like(a) for a in p.arrays()]
    if bias is not None:
        # last array is the final siamese-head bias, which with all other
        # parameters zero makes the displacement output that constant
        arrays[-1] = np.asarray(bias, dtype=np.float64)
    return p.with_arrays(arrays)


class TestAnchorPrediction:
    def test_zero_displacement_returns_anchor_mean(self):
        params = _zero_params()
        anchors = AnchorSet(
            samples=(_frame([2, 1, 1, 1]), _frame([4, 5, 5, 5])), frame_ids=(0, 1)
        )
        out = predict_with_anchors(params, _frame([0, 0, 0, 0]), anchors)
        np.testing.assert_allclose(out, [3, 3, 3, 3], atol=1e-12)

    def test_single_anchor_is_displacement_plus_label(self):
        params = _zero_params(bias=[1.0, 0.0, 0.0, 0.0])
        anchors = AnchorSet(samples=(_frame([3, 3, 3, 3]),), frame_ids=(0,))
        out = predict_with_anchors(params, _frame([0, 0, 0, 0]), anchors)
        np.testing.assert_allclose(out, [4, 3, 3, 3], atol=1e-12)

    def test_matches_manual_average_with_real_weights(self):
        from petbench.net import forward_siamese

        rng = np.random.default_rng(3)
        params = init_params(5, 1, 32)
        query = BinocularSample(
            left=rng.normal(size=(1, 32, 32)),
            right=rng.normal(size=(1, 32, 32)),
            label=np.zeros(4),
        )
        anchors = select_anchors(
            [
                BinocularSample(
                    left=rng.normal(size=(1, 32, 32)),
                    right=rng.normal(size=(1, 32, 32)),
                    label=rng.uniform(-20, 20, size=4),
                )
                for _ in range(6)
            ],
            3,
            9,
        )
        expect = np.zeros(4)
        for a in anchors.samples:
            expect += forward_siamese(params, query, a) + a.label
        expect /= anchors.count
        np.testing.assert_allclose(
            predict_with_anchors(params, query, anchors), expect, atol=1e-12
        )


def _l1_objective(preds, gts, calib):
    fitted = apply_linear_calib(calib, preds)
    return np.abs(gts - fitted).sum(axis=0)


def _grid_axis_objective(p, g, lo=-5.0, hi=5.0):
    # coarse-to-fine grid scan, an independent check on the exact solver
    def scan(t_lo, t_hi, m_lo, m_hi, steps):
        th = np.linspace(t_lo, t_hi, steps)
        mu = np.linspace(m_lo, m_hi, steps)
        obj = np.abs(
            g[None, None, :] - (th[:, None, None] + mu[None, :, None] * p[None, None, :])
        ).sum(axis=2)
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        return th[i], mu[j], obj[i, j]

    t, m, _ = scan(lo, hi, lo, hi, 201)
    step = (hi - lo) / 200
    t, m, best = scan(t - step, t + step, m - step, m + step, 161)
    return best


class TestLinearCalibration:
    def test_planted_affine_recovered(self):
        rng = np.random.default_rng(0)
        preds = rng.uniform(-20, 20, size=(30, 4))
        theta0 = np.array([1.0, -1.0, 0.5, 0.0])
        mu = np.array([2.0, 0.5, 1.0, -1.0])
        gts = theta0 + mu * preds
        calib = fit_linear_calib(preds, gts)
        np.testing.assert_allclose(calib.theta0, theta0, atol=1e-9)
        np.testing.assert_allclose(calib.mu, mu, atol=1e-9)

    def test_identity_when_already_calibrated(self):
        rng = np.random.default_rng(1)
        preds = rng.uniform(-20, 20, size=(10, 4))
        calib = fit_linear_calib(preds, preds.copy())
        np.testing.assert_allclose(calib.theta0, 0.0, atol=1e-12)
        np.testing.assert_allclose(calib.mu, 1.0, atol=1e-12)

    def test_never_worse_than_identity(self):
        rng = np.random.default_rng(2)
        for trial in range(5):
            preds = rng.uniform(-5, 5, size=(12, 4))
            gts = preds + rng.laplace(scale=1.0, size=(12, 4))
            calib = fit_linear_calib(preds, gts)
            fitted = _l1_objective(preds, gts, calib)
            identity = np.abs(gts - preds).sum(axis=0)
            assert np.all(fitted <= identity + 1e-9)

    def test_matches_grid_oracle_on_noisy_data(self):
        rng = np.random.default_rng(3)
        preds = rng.uniform(-4, 4, size=(15, 4))
        gts = 1.0 + 0.7 * preds + rng.laplace(scale=0.3, size=(15, 4))
        calib = fit_linear_calib(preds, gts)
        fitted = _l1_objective(preds, gts, calib)
        for k in range(4):
            oracle = _grid_axis_objective(preds[:, k], gts[:, k])
            assert fitted[k] <= oracle + 1e-9

    def test_degenerate_axis_named(self):
        rng = np.random.default_rng(4)
        preds = rng.uniform(-5, 5, size=(8, 4))
        preds[:, 1] = 2.5
        gts = rng.uniform(-5, 5, size=(8, 4))
        with pytest.raises(DataError, match=AXIS_NAMES[1]):
            fit_linear_calib(preds, gts)

    def test_tie_break_prefers_small_theta0_then_mu(self):
        # four equal-objective optimal lines; the deterministic pick is
        # the lexicographically smallest (theta0, mu)
        p = np.array([0.0, 1.0, 0.0, 1.0])
        g = np.array([0.0, 1.0, 1.0, 0.0])
        preds = np.tile(p[:, None], (1, 4))
        gts = np.tile(g[:, None], (1, 4))
        calib = fit_linear_calib(preds, gts)
        np.testing.assert_array_equal(calib.theta0, 0.0)
        np.testing.assert_array_equal(calib.mu, 0.0)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            fit_linear_calib(np.zeros((3, 3)), np.zeros((3, 3)))
        with pytest.raises(ValueError):
            fit_linear_calib(np.zeros((3, 4)), np.zeros((4, 4)))
        with pytest.raises(DataError):
            fit_linear_calib(np.zeros((1, 4)), np.zeros((1, 4)))

    def test_apply_pinned_and_broadcast(self):
        calib = LinearCalib(np.array([1.0, 0, 0, 0]), np.array([2.0, 1, 1, 1]))
        np.testing.assert_array_equal(
            apply_linear_calib(calib, np.array([3.0, 3, 3, 3])), [7, 3, 3, 3]
        )
        batch = np.ones((5, 4)) * 3
        out = apply_linear_calib(calib, batch)
        assert out.shape == (5, 4)
        np.testing.assert_array_equal(out[2], [7, 3, 3, 3])

    def test_calib_validation_and_dict(self):
        with pytest.raises(ValueError):
            LinearCalib(np.zeros(3), np.zeros(4))
        with pytest.raises(ValueError):
            LinearCalib(np.array([np.nan, 0, 0, 0]), np.zeros(4))
        d = LinearCalib(np.zeros(4), np.ones(4)).to_dict(subject_id=3)
        assert d["subject_id"] == 3
        assert d["mu"] == [1.0, 1.0, 1.0, 1.0]
