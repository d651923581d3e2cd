"""Acceptance checklist for the whole benchmark, one criterion per test.

Criteria 1-7 are exact math, property, and determinism checks (fast).
Criteria 8-12 run the full desk-scale experiment once (about nine
minutes: data generation, six trainings, all evaluations) and check the
qualitative orderings the benchmark exists to demonstrate. Every test
prints a single ``criterion N: PASS/FAIL`` line so a verbose run reads
as a checklist.
"""

import hashlib
import json

import numpy as np
import pytest

from petbench.cli import main as cli_main
from petbench.dataio import SampleLoader, load_manifest
from petbench.evaluation import EvalOptions, collect_errors, make_report, percentile
from petbench.net import (
    NetModel,
    backward,
    baseline_forward_batch,
    init_params,
    siamese_forward_batch,
)
from petbench.personalize import apply_linear_calib, fit_linear_calib
from petbench.polarization import (
    Modality,
    compute_ida,
    compute_stokes,
    synth_quad_from_ida,
)
from petbench.synthgen import GenConfig, gen_dataset
from petbench.train import LossParams, loss_eq1, loss_eq1_batch


_PARAM_NAMES = [
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b",
    "feat_w", "feat_b", "base1_w", "base1_b", "base2_w", "base2_b",
    "siam1_w", "siam1_b", "siam2_w", "siam2_b",
]


def _line(n: int, ok: bool, text: str):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {text}")
    assert ok, f"criterion {n}: {text}"


# ---------------------------------------------------------------------------
# exact / property suite


def test_criterion_01_polarization_round_trip():
    r = np.random.default_rng(41)
    shape = (25, 40)  # 1000 pixels
    inten = r.uniform(0.05, 1.0, size=shape)
    dolp = r.uniform(0.0, 0.5, size=shape)
    aolp = r.uniform(0.0, np.pi, size=shape)

    ida = compute_ida(compute_stokes(synth_quad_from_ida(inten, dolp, aolp)))

    err_i = np.abs(ida.intensity - inten).max()
    err_d = np.abs(ida.dolp - dolp).max()
    # orientation is only defined modulo pi, and only where light is
    # actually polarized
    d = np.abs(np.mod(ida.aolp, np.pi) - np.mod(aolp, np.pi))
    err_a = np.minimum(d, np.pi - d)[dolp > 1e-3].max()
    worst = max(err_i, err_d, err_a)
    _line(1, worst <= 1e-5, f"IDA round trip max error {worst:.2e} <= 1e-5")


def test_criterion_02_loss_pinned_values_and_smooth_l1():
    lp = LossParams(beta=0.1, tau=0.1, k=0.1)
    pinned = {0.05: 0.0125, 0.2: 0.015, 0.1: 0.005}
    worst = 0.0
    for e, want in pinned.items():
        loss, _ = loss_eq1(np.full(4, e), np.zeros(4), lp)
        worst = max(worst, abs(loss - want))

    lp_l1 = LossParams(beta=1.0, tau=np.inf, k=1.0)
    grid = np.linspace(-2.5, 2.5, 100)
    for e in grid:
        loss, _ = loss_eq1(np.full(4, e), np.zeros(4), lp_l1)
        want = 0.5 * e * e if abs(e) < 1.0 else abs(e) - 0.5
        worst = max(worst, abs(loss - want))
    _line(2, worst <= 1e-12, f"pinned losses and Smooth-L1 reduction, max dev {worst:.2e}")


def _head_preactivations(cache):
    """All ReLU pre-activation arrays reachable from a forward cache."""
    pre = []
    if cache[0] == "baseline":
        _, (cl, cr), (feat, h1, a1) = cache
        enc_caches = (cl, cr)
    else:
        _, cq, cr, (feat, h1, a1) = cache
        enc_caches = cq + cr
    for ec in enc_caches:
        _, c1, _, c2, _, c3, _, _ = ec
        pre.extend([c1, c2, c3])
    pre.append(h1)
    return pre


def test_criterion_03_gradient_check():
    lp = LossParams(beta=0.1, tau=0.1, k=0.1)
    h = 1e-4
    worst = 0.0
    for kind in ("baseline", "siamese"):
        for d in (1, 3):
            r = np.random.default_rng(100 * d + (kind == "siamese"))
            params = init_params(7, d, 32)
            imgs = [r.normal(0.0, 1.0, size=(2, d, 32, 32)) for _ in range(4)]
            targets = np.where(r.random(size=(2, 4)) < 0.5, -2.0, 2.0)

            def run(p):
                if kind == "baseline":
                    out, cache = baseline_forward_batch(p, imgs[0], imgs[1])
                else:
                    out, cache = siamese_forward_batch(p, *imgs)
                loss, g = loss_eq1_batch(out, targets, lp)
                return loss, g, cache

            _, gbatch, cache0 = run(params)
            grads = backward(params, cache0, gbatch)
            # only fields the active head touches get checked
            skip = "siam" if kind == "baseline" else "base"
            names = [f for f in _PARAM_NAMES if not f.startswith(skip)]

            checked = 0
            for attempt in range(500):
                if checked >= 50:
                    break
                name = names[int(r.integers(len(names)))]
                arr = getattr(params, name)
                idx = int(r.integers(arr.size))

                def shifted(delta):
                    new = [a.copy() for a in params.arrays()]
                    pos = _PARAM_NAMES.index(name)
                    new[pos].flat[idx] += delta
                    return params.with_arrays(new)

                lp_p, _, cache_p = run(shifted(+h))
                lp_m, _, cache_m = run(shifted(-h))
                flipped = any(
                    np.any((a > 0) != (b > 0))
                    for a, b in zip(_head_preactivations(cache_p), _head_preactivations(cache_m))
                )
                if flipped:
                    continue
                numeric = (lp_p - lp_m) / (2.0 * h)
                analytic = getattr(grads, name).flat[idx]
                rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8)
                worst = max(worst, rel)
                checked += 1
            assert checked == 50, f"could not place 50 kink-free probes for {kind} D={d}"
    _line(3, worst < 1e-3, f"50 params x 4 graphs, max relative error {worst:.2e}")


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("acc") / "data"
    cfg = GenConfig(
        n_subjects=4,
        frames_per_subject=12,
        image_size=32,
        master_seed=33,
        calib_frames=10,
        calib_targets=5,
    )
    gen_dataset(cfg, root)
    return root


class _TrueDisplacementOracle(NetModel):
    """Feature = exact gaze label, heads do exact label arithmetic."""

    def __init__(self, loader, manifest):
        super().__init__(init_params(0, loader.modality.channels, 32), "siamese", loader.modality)
        self._lookup = {}
        for sid in manifest.subject_ids():
            for session in ("main", "calib"):
                xl, xr, labels = loader.arrays(sid, session)
                for i in range(labels.shape[0]):
                    key = xl[i].tobytes() + xr[i].tobytes()
                    self._lookup[key] = labels[i]

    def features(self, left, right):
        left = np.asarray(left)
        if left.ndim == 3:
            return self.features(left[None], np.asarray(right)[None])[0]
        right = np.asarray(right)
        return np.stack(
            [self._lookup[left[i].tobytes() + right[i].tobytes()] for i in range(left.shape[0])]
        )

    def absolute_from_features(self, feat):
        return np.atleast_2d(feat)

    def delta_from_features(self, feat_query, feat_reference):
        return np.atleast_2d(feat_query) - np.atleast_2d(feat_reference)


def test_criterion_04_anchor_mean_oracle_identity(small_dataset):
    manifest = load_manifest(small_dataset)
    loader = SampleLoader(manifest, Modality.POLARIZATION3)
    oracle = _TrueDisplacementOracle(loader, manifest)
    worst = 0.0
    for c in (1, 3, 9):
        options = EvalOptions(kind="siamese", modality=Modality.POLARIZATION3, anchors=c, seed=0)
        report = make_report(collect_errors(oracle, loader, manifest.subject_ids(), options))
        worst = max(worst, report.p50, report.p75, report.p95)
    _line(4, worst <= 1e-9, f"true-displacement oracle, worst percentile {worst:.2e}")


def test_criterion_05_linear_calibration_fit():
    r = np.random.default_rng(17)
    ok = True

    theta0 = np.array([0.7, -1.3, 2.0, 0.4])
    mu = np.array([1.1, 0.9, 1.3, 0.8])
    preds = r.normal(0.0, 5.0, size=(12, 4))
    fit = fit_linear_calib(preds, theta0 + mu * preds)
    exact = max(np.abs(fit.theta0 - theta0).max(), np.abs(fit.mu - mu).max())
    ok &= exact <= 1e-9

    # noisy fit must match a two-stage grid search on the same L1 objective
    preds_n = r.normal(0.0, 3.0, size=(15, 4))
    gts_n = theta0 + mu * preds_n + r.normal(0.0, 0.5, size=(15, 4))
    fit_n = fit_linear_calib(preds_n, gts_n)
    grid_gap = 0.0
    for axis in range(4):
        p, g = preds_n[:, axis], gts_n[:, axis]
        fitted = np.abs(g - (fit_n.theta0[axis] + fit_n.mu[axis] * p)).sum()

        def grid_best(th_lo, th_hi, mu_lo, mu_hi, n):
            ths = np.linspace(th_lo, th_hi, n)
            mus = np.linspace(mu_lo, mu_hi, n)
            obj = np.abs(g[None, None, :] - (ths[:, None, None] + mus[None, :, None] * p[None, None, :])).sum(axis=2)
            i, j = np.unravel_index(np.argmin(obj), obj.shape)
            return ths[i], mus[j], obj[i, j]

        th_c, mu_c, _ = grid_best(-6.0, 6.0, -2.0, 3.0, 201)
        _, _, best = grid_best(th_c - 0.12, th_c + 0.12, mu_c - 0.05, mu_c + 0.05, 161)
        grid_gap = max(grid_gap, fitted - best)
    ok &= grid_gap <= 1e-6

    never_worse = True
    for _ in range(20):
        n = int(r.integers(2, 30))
        p = r.normal(0.0, 4.0, size=(n, 4))
        g = r.normal(0.0, 4.0, size=(n, 4))
        f = fit_linear_calib(p, g)
        never_worse &= bool(
            np.abs(g - apply_linear_calib(f, p)).sum() <= np.abs(g - p).sum() + 1e-12
        )
    ok &= never_worse
    _line(
        5,
        ok,
        f"planted recovery {exact:.1e}, grid gap {grid_gap:.1e}, calibrated never worse: {never_worse}",
    )


def test_criterion_06_percentile_pinned_values():
    vals = [1.0, 2.0, 3.0, 4.0, 5.0]
    got = [percentile(vals, p) for p in (50.0, 75.0, 95.0)]
    dev = max(abs(a - b) for a, b in zip(got, (3.0, 4.0, 4.8)))
    _line(6, dev <= 1e-12, f"[1..5] -> p50={got[0]} p75={got[1]} p95={got[2]}")


def _tree_digest(root) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_criterion_07_determinism(tmp_path, small_dataset):
    gen_args = ["gen", "--subjects", "2", "--frames", "6", "--calib-frames", "4",
                "--calib-targets", "2", "--seed", "19"]
    assert cli_main(gen_args + ["--out", str(tmp_path / "g1")]) == 0
    assert cli_main(gen_args + ["--out", str(tmp_path / "g2")]) == 0
    gen_same = _tree_digest(tmp_path / "g1") == _tree_digest(tmp_path / "g2")

    train_args = [
        "train", "--data", str(small_dataset), "--model", "siamese",
        "--modality", "polarization", "--steps", "12", "--batch-size", "8",
        "--pairs-per-epoch", "48", "--eval-interval", "12", "--eval-frames", "6",
        "--threads", "1", "--seed", "5",
    ]
    assert cli_main(train_args + ["--out", str(tmp_path / "t1")]) == 0
    assert cli_main(train_args + ["--out", str(tmp_path / "t2")]) == 0
    train_same = (tmp_path / "t1" / "model.petc").read_bytes() == (
        tmp_path / "t2" / "model.petc"
    ).read_bytes() and (tmp_path / "t1" / "log.jsonl").read_bytes() == (
        tmp_path / "t2" / "log.jsonl"
    ).read_bytes()
    _line(7, gen_same and train_same, f"gen identical: {gen_same}, train identical: {train_same}")


# ---------------------------------------------------------------------------
# end-to-end desk-scale experiment


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench") / "repro"
    rc = cli_main(["repro", "--out", str(out)])
    assert rc == 0
    return json.loads((out / "summary.json").read_text())


def _crit(benchmark, n: int) -> dict:
    return next(c for c in benchmark["criteria"] if c["id"] == n)


@pytest.mark.slow
def test_criterion_08_personalization_margin(benchmark):
    c = _crit(benchmark, 8)
    d = c["details"]
    reports = benchmark["reports"]
    base, siam = reports["baseline-polarization"], reports["siamese-polarization-C9"]
    cal = reports["siamese-polarization-C9-lincal"]
    drop50 = (base["p50"] - siam["p50"]) / base["p50"]
    drop95 = (base["p95"] - siam["p95"]) / base["p95"]
    best = all(
        cal["p50"] <= r["p50"] and cal["p95"] <= r["p95"]
        for name, r in reports.items()
        if name != "siamese-polarization-C9-lincal"
    )
    ok = drop50 >= 0.30 and drop95 >= 0.30 and best
    assert ok == c["passed"], (d, drop50, drop95, best)
    _line(8, ok, f"drop vs baseline p50 {drop50:.1%}, p95 {drop95:.1%}; lincal best: {best}")


@pytest.mark.slow
def test_criterion_09_polarization_beats_intensity(benchmark):
    c = _crit(benchmark, 9)
    d = c["details"]
    hp_drop = (
        d["high_pitch_p50_intensity3"] - d["high_pitch_p50_polarization"]
    ) / d["high_pitch_p50_intensity3"]
    ok = d["p50_polarization"] < d["p50_intensity3"] and hp_drop >= 0.10
    assert ok == c["passed"]
    _line(
        9,
        ok,
        f"siamese p50 {d['p50_polarization']:.3f} vs {d['p50_intensity3']:.3f} deg, "
        f"high-pitch drop {hp_drop:.1%}",
    )


@pytest.mark.slow
def test_criterion_10_anchor_sweep_monotone(benchmark):
    c = _crit(benchmark, 10)
    sweep = [benchmark["anchor_sweep_p50"][k] for k in ("3", "5", "7", "9")]
    inversions = [(b - a) / a for a, b in zip(sweep, sweep[1:]) if b > a]
    ok = sweep[-1] <= sweep[0] and len(inversions) <= 1 and all(v <= 0.02 for v in inversions)
    assert ok == c["passed"]
    _line(10, ok, "anchor sweep p50 " + " / ".join(f"{v:.3f}" for v in sweep))


@pytest.mark.slow
def test_criterion_11_random_sampling_no_worse(benchmark):
    c = _crit(benchmark, 11)
    d = c["details"]
    ok = d["p50_random"] <= d["p50_calibration_sampled"]
    assert ok == c["passed"]
    _line(11, ok, f"random {d['p50_random']:.3f} <= calibration-sampled {d['p50_calibration_sampled']:.3f} deg")


@pytest.mark.slow
def test_criterion_12_triplicate_intensity_no_worse(benchmark):
    c = _crit(benchmark, 12)
    d = c["details"]
    ok = d["p50_intensity3"] <= d["p50_intensity1"]
    assert ok == c["passed"]
    _line(12, ok, f"intensity3 {d['p50_intensity3']:.3f} <= intensity1 {d['p50_intensity1']:.3f} deg")
