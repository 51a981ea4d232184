"""Acceptance checks, one test per criterion.

Real-data criteria read CSV files from ``$DEGRAN_DATA_DIR`` (default: the
repository's ``data/`` directory); a missing file fails the criterion.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from degran.augmented import augmented_reconstruct, lambda_hat, tls_membership
from degran.data import fit_stats, load_csv, synth_gaussian
from degran.evaluation import ExperimentConfig, default_c_grid, grid_search, reconstruction_error, summarize
from degran.fcm import FcmConfig, fcm_fit
from degran.granulation import curvature_factors, degranulate, granulate

DATA_DIR = Path(os.environ.get("DEGRAN_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))

# name -> (file, label column, c, m, runtime budget in seconds)
BENCHMARKS = {
    "vertebral": ("vertebral_column.csv", -1, 8, 1.2, 60.0),
    "glass": ("glass.csv", -1, 12, 1.2, 60.0),
    "urban": ("urban_land_cover.csv", 0, 7, 1.2, 600.0),
}


class Bench:
    def __init__(self, report, seconds):
        self.report = report
        self.seconds = seconds
        self.rows = {r.method: r for r in summarize(report)}

    def mean(self, method, split):
        row = self.rows[method]
        return row.train_mean if split == "train" else row.test_mean


_CACHE = {}


def bench(name):
    if name in _CACHE:
        return _CACHE[name]
    if name == "synthetic":
        ds, _ = synth_gaussian(300, 6, 3, seed=0)
        cfg = ExperimentConfig(c_values=default_c_grid(3))
    else:
        fname, label, c, m, _ = BENCHMARKS[name]
        path = DATA_DIR / fname
        if not path.exists():
            pytest.fail(f"dataset file {path} not found; see README for how to obtain it")
        ds = load_csv(path, label_column=label)
        cfg = ExperimentConfig(c_values=[c], m_values=[m])
    t0 = time.perf_counter()
    report = grid_search(ds, cfg)
    _CACHE[name] = Bench(report, time.perf_counter() - t0)
    return _CACHE[name]


def tag(record_property, key, title, dataset=None):
    record_property("criterion", key)
    record_property("title", title)
    if dataset is not None:
        path = DATA_DIR / BENCHMARKS[dataset][0]
        if not path.exists():
            record_property("detail", f"data file missing: {path}")


def projection(x, v):
    return x @ v.T @ np.linalg.pinv(v @ v.T, rcond=1e-12) @ v


def test_criterion_1_projection_theorem(record_property):
    tag(record_property, "1", "projection theorem on 50 full-rank fits")
    t0 = time.perf_counter()
    worst_err = worst_proj = 0.0
    for k in range(50):
        rng = np.random.default_rng(1000 + k)
        dims = int(rng.integers(2, 7))
        c = int(rng.integers(dims, dims + 4))
        n_pts = int(rng.integers(60, 151))
        m = float(rng.choice([1.2, 1.6, 2.0, 2.4, 3.0]))
        ds, _ = synth_gaussian(n_pts, dims, c, seed=k)
        x = fit_stats(ds.features).apply(ds.features)
        res = fcm_fit(x, FcmConfig(c=c, m=m, seed=k))
        assert np.linalg.matrix_rank(res.v) == dims
        model = augmented_reconstruct(x, res.v, m)
        err = reconstruction_error(x, model.x_hat.x_hat)
        proj = np.linalg.norm(model.x_hat.x_hat - projection(x, res.v)) / np.linalg.norm(x)
        worst_err, worst_proj = max(worst_err, err), max(worst_proj, proj)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"max error {worst_err:.2e}, max projection gap {worst_proj:.2e}, {elapsed:.1f}s")
    assert worst_err <= 1e-6
    assert worst_proj <= 1e-6
    assert elapsed < 30


def test_criterion_2_vertebral_column(record_property):
    tag(record_property, "2", "vertebral column c=8 m=1.2", "vertebral")
    b = bench("vertebral")
    aug_tr, aug_te = b.mean("augmented", "train"), b.mean("augmented", "test")
    fcm_tr = b.mean("baseline", "train")
    record_property("detail", f"FCM train {fcm_tr:.4f}; augmented train {aug_tr:.2e} test {aug_te:.2e}; "
                              f"{b.seconds:.1f}s")
    assert aug_tr <= 0.01 and aug_te <= 0.01
    assert fcm_tr >= 5 * aug_tr
    assert b.seconds < BENCHMARKS["vertebral"][4]


def test_criterion_3_glass(record_property):
    tag(record_property, "3", "glass identification c=12 m=1.2", "glass")
    b = bench("glass")
    aug_tr, fcm_tr = b.mean("augmented", "train"), b.mean("baseline", "train")
    n = b.report.n_features
    soft = 0.06 <= fcm_tr <= 0.17
    soft_pf = 0.06 <= fcm_tr / n <= 0.17
    record_property("detail", f"FCM train {fcm_tr:.4f} ({fcm_tr / n:.4f} per feature); augmented train "
                              f"{aug_tr:.2e}; ratio {aug_tr / fcm_tr:.2e}; soft gate [0.06, 0.17] "
                              f"{'met' if soft else 'missed'} ({'met' if soft_pf else 'missed'} per feature); "
                              f"{b.seconds:.1f}s")
    assert aug_tr <= 0.2 * fcm_tr
    assert b.seconds < BENCHMARKS["glass"][4]


def test_criterion_4_urban_land_cover(record_property):
    tag(record_property, "4", "urban land cover c=7 m=1.2", "urban")
    b = bench("urban")
    aug_tr, fcm_tr = b.mean("augmented", "train"), b.mean("baseline", "train")
    record_property("detail", f"FCM train {fcm_tr:.4f}; augmented train {aug_tr:.4f}; "
                              f"ratio {aug_tr / fcm_tr:.3f}; {b.seconds:.1f}s")
    assert aug_tr <= 0.85 * fcm_tr
    assert b.seconds < BENCHMARKS["urban"][4]


def test_criterion_5_synthetic(record_property):
    tag(record_property, "5", "synthetic 300x6, 3 classes, default grid")
    b = bench("synthetic")
    vals = {(m, s): b.mean(m, s) for m in ("baseline", "augmented") for s in ("train", "test")}
    record_property("detail", f"augmented train {vals['augmented', 'train']:.2e} test "
                              f"{vals['augmented', 'test']:.2e}; FCM train {vals['baseline', 'train']:.4f} "
                              f"test {vals['baseline', 'test']:.4f}; {b.seconds:.1f}s")
    assert vals["augmented", "train"] <= 1e-3 and vals["augmented", "test"] <= 1e-3
    assert vals["baseline", "train"] > 0.01 and vals["baseline", "test"] > 0.01
    assert b.seconds < 120


def loop_prototypes(x, u, m):
    c, n = u.shape
    v = np.zeros((c, x.shape[1]))
    for j in range(c):
        w = 0.0
        for i in range(n):
            v[j] += u[j, i] ** m * x[i]
            w += u[j, i] ** m
        v[j] /= w
    return v


def loop_reconstruction(u, v, m):
    c, n = u.shape
    out = np.zeros((n, v.shape[1]))
    for i in range(n):
        w = 0.0
        for j in range(c):
            out[i] += u[j, i] ** m * v[j]
            w += u[j, i] ** m
        out[i] /= w
    return out


def test_criterion_6_factorization_identities(record_property):
    tag(record_property, "6", "factorization identities on 100 fitted models")
    t0 = time.perf_counter()
    worst_rel = worst_g = worst_d = 0.0
    for k in range(100):
        rng = np.random.default_rng(2000 + k)
        m = (1.2, 2.0, 3.0)[k % 3]
        dims = int(rng.integers(2, 6))
        c = int(rng.integers(2, 7))
        x = rng.normal(size=(int(rng.integers(20, 61)), dims))
        res = fcm_fit(x, FcmConfig(c=c, m=m, seed=k))
        psi, xi = curvature_factors(x, res.v, m)
        target = (res.u ** m).T
        rel = np.abs(target - psi[:, None] * xi) / np.maximum(target, 1e-300)
        worst_rel = max(worst_rel, float(rel.max()))
        worst_g = max(worst_g, float(np.abs(granulate(x, res.u, m) - loop_prototypes(x, res.u, m)).max()))
        worst_d = max(worst_d, float(np.abs(degranulate(res.u, res.v, m).x_hat
                                             - loop_reconstruction(res.u, res.v, m)).max()))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"max rel {worst_rel:.2e}; granulate {worst_g:.2e}; degranulate {worst_d:.2e}; "
                              f"{elapsed:.1f}s")
    assert worst_rel < 1e-9
    assert worst_g < 1e-10 and worst_d < 1e-10
    assert elapsed < 60


def test_criterion_7_tls_oracles(record_property):
    tag(record_property, "7", "TLS and scalar least-squares oracles")
    t0 = time.perf_counter()
    worst_u = worst_tail = worst_lam = 0.0
    for k in range(100):
        rng = np.random.default_rng(3000 + k)
        n, c = int(rng.integers(4, 41)), int(rng.integers(1, 7))
        th = rng.uniform(0.5, 2.0, size=n) * rng.choice([-1.0, 1.0], size=n)
        om = rng.normal(size=(n, c))
        u, diag = tls_membership(th, om)
        assert not diag.fallback
        direct = (om / th[:, None]).T
        worst_u = max(worst_u, float(np.linalg.norm(u - direct) / np.linalg.norm(direct)))
        worst_tail = max(worst_tail, max(diag.trailing_singulars) / diag.sigma_max)
    grid = np.arange(-100_000, 100_001) * 1e-4
    rng = np.random.default_rng(4000)
    for _ in range(100):
        c = int(rng.integers(2, 7))
        xi = rng.uniform(0.05, 3.0, size=(1, c))
        om = rng.uniform(-5, 5) * xi + 0.3 * rng.normal(size=(1, c))
        cost = ((grid[:, None] * xi[0] - om[0]) ** 2).sum(axis=1)
        worst_lam = max(worst_lam, abs(float(lambda_hat(xi, om)[0]) - grid[cost.argmin()]))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"max rel gap {worst_u:.2e}; max trailing/sigma_max {worst_tail:.2e}; "
                              f"lambda scan gap {worst_lam:.1e}; {elapsed:.1f}s")
    assert worst_u <= 1e-6
    assert worst_tail < 1e-10
    assert worst_lam <= 1e-3
    assert elapsed < 60


def test_criterion_8_dominance_and_monotonicity(record_property):
    tag(record_property, "8", "dominance and monotone objective over benchmark cells")
    names, missing = [], []
    for name in ("vertebral", "glass", "urban", "synthetic"):
        if name != "synthetic" and not (DATA_DIR / BENCHMARKS[name][0]).exists():
            missing.append(name)
            continue
        names.append(name)
    cells = violations = rises = failed = 0
    for name in names:
        for cell in bench(name).report.cells:
            cells += 1
            if not cell.ok:
                failed += 1
                continue
            if cell.error("augmented", "train") > cell.error("baseline", "train") + 1e-9:
                violations += 1
            if not cell.trace_monotone:
                rises += 1
    detail = f"{cells} cells from {', '.join(names)}; {violations} dominance violations; {rises} non-monotone traces"
    if failed:
        detail += f"; {failed} failed cells"
    if missing:
        detail += f"; not run (data missing): {', '.join(missing)}"
    record_property("detail", detail)
    assert violations == 0 and rises == 0 and failed == 0
