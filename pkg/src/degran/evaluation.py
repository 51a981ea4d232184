"""Reconstruction error, cross-validated grid search, and report rendering."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .augmented import SCHEMA_VERSION, augmented_reconstruct
from .data import RawDataset, fit_stats, kfold_split
from .fcm import FcmConfig, fcm_fit, membership_for, sigmas, trace_is_monotone
from .granulation import degranulate

METHODS = ("baseline", "augmented")
METHOD_LABELS = {"baseline": "FCM", "augmented": "Augmented"}


class ConfigError(ValueError):
    pass


class EmptyReportError(ValueError):
    pass


def default_m_grid() -> list[float]:
    """1.2, 1.4, ..., 3.0."""
    return [round(1.2 + 0.2 * k, 10) for k in range(10)]


def default_c_grid(n_classes: int) -> list[int]:
    return list(range(n_classes, n_classes + 6))


def reconstruction_error(x, x_hat, stds=None, per_feature: bool = False) -> float:
    """Mean over data of the sigma-weighted squared distance to the reconstruction.

    With ``per_feature=True`` the result is additionally divided by the
    number of features.
    """
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    s = sigmas(stds, x.shape[1])
    err = float(np.mean(np.sum(((x - x_hat) / s) ** 2, axis=1)))
    return err / x.shape[1] if per_feature else err


@dataclass(frozen=True)
class ExperimentConfig:
    c_values: tuple[int, ...]
    m_values: tuple[float, ...] = tuple(default_m_grid())
    folds: int = 10
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    normalize: str = "global"
    stratified: bool = False
    select_method: str = "augmented"
    select_on: str = "train"
    epsilon: float = 1e-5
    max_iter: int = 200
    restarts: int = 1
    per_feature: bool = False
    final: str = "theta"

    def __post_init__(self):
        object.__setattr__(self, "c_values", tuple(int(c) for c in self.c_values))
        object.__setattr__(self, "m_values", tuple(float(m) for m in self.m_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.c_values or min(self.c_values) < 1:
            raise ConfigError("c_values must be non-empty and all >= 1")
        if not self.m_values or min(self.m_values) <= 1:
            raise ConfigError("m_values must be non-empty and all > 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        if self.select_method not in self.methods:
            raise ConfigError(f"select_method {self.select_method!r} is not among the run methods")
        if self.select_on not in ("train", "total"):
            raise ConfigError("select_on must be 'train' or 'total'")
        if self.normalize not in ("global", "fold"):
            raise ConfigError("normalize must be 'global' or 'fold'")
        if self.final not in ("theta", "rowsum"):
            raise ConfigError("final must be 'theta' or 'rowsum'")

    def fcm_config(self, c: int, m: float, seed: int) -> FcmConfig:
        return FcmConfig(c=c, m=m, epsilon=self.epsilon, max_iter=self.max_iter,
                         seed=seed, restarts=self.restarts)


@dataclass
class FoldOutcome:
    fold: int
    c: int
    m: float
    status: str = "ok"
    message: str = ""
    errors: dict = field(default_factory=dict)
    n_train: int = 0
    n_test: int = 0
    iterations: int = 0
    converged: bool = False
    trace_monotone: bool = True
    trace_max_rise: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def error(self, method: str, split: str) -> float:
        return self.errors[method][split]


def _total(e_train: float, e_test: float, n_train: int, n_test: int) -> float:
    return (n_train * e_train + n_test * e_test) / (n_train + n_test)


def run_fold(train, test, c: int, m: float, cfg: ExperimentConfig, seed: int = 0,
             stds=None, fold: int = 0) -> FoldOutcome:
    """Fit on ``train`` and score both reconstructions on ``train`` and ``test``.

    Failures are captured in the outcome's status instead of raised.
    """
    train = np.asarray(train, dtype=float)
    test = np.asarray(test, dtype=float)
    out = FoldOutcome(fold=fold, c=int(c), m=float(m), n_train=train.shape[0], n_test=test.shape[0])
    if train.shape[1] != test.shape[1]:
        raise ValueError("train and test must share the feature count")
    try:
        res = fcm_fit(train, cfg.fcm_config(c, m, seed), stds)
        out.iterations = res.iterations
        out.converged = res.converged
        tr = np.asarray(res.objective_trace)
        out.trace_monotone = trace_is_monotone(tr)
        if tr.size > 1:
            rise = (tr[1:] - tr[:-1]) / np.maximum(np.abs(tr[:-1]), 1e-300)
            out.trace_max_rise = float(max(rise.max(), 0.0))

        def score(method: str, x, u):
            if method == "baseline":
                x_hat = degranulate(u, res.v, m).x_hat
                return reconstruction_error(x, x_hat, stds, cfg.per_feature), {}
            model = augmented_reconstruct(x, res.v, m, stds, final=cfg.final)
            d = model.diagnostics
            return (reconstruction_error(x, model.x_hat.x_hat, stds, cfg.per_feature),
                    {"fallback": d.fallback, "g2_cond": d.g2_cond if math.isfinite(d.g2_cond) else None,
                     "u_hat_min": d.u_hat_min, "u_hat_max": d.u_hat_max})

        u_test = membership_for(test, res.v, m, stds)
        for method in cfg.methods:
            e_tr, d_tr = score(method, train, res.u)
            e_te, d_te = score(method, test, u_test)
            out.errors[method] = {
                "train": e_tr,
                "test": e_te,
                "total": _total(e_tr, e_te, out.n_train, out.n_test),
            }
            if d_tr:
                out.diagnostics[method] = {"train": d_tr, "test": d_te}
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as err:
        out.status = "failed"
        out.message = f"{type(err).__name__}: {err}"
        out.errors = {}
    return out


def cell_seed(base: int, fold: int, c: int, m_index: int) -> int:
    return int(np.random.SeedSequence([base, fold, c, m_index]).generate_state(1)[0])


@dataclass
class EvalReport:
    dataset: str
    n_points: int
    n_features: int
    config: ExperimentConfig
    folds: list[FoldOutcome]
    cells: list[FoldOutcome] = field(default_factory=list)

    @property
    def successful(self) -> list[FoldOutcome]:
        return [f for f in self.folds if f.ok]

    def to_dict(self) -> dict:
        try:
            summary = [asdict(r) for r in summarize(self)]
        except EmptyReportError:
            summary = []
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "eval_report",
            "dataset": self.dataset,
            "n_points": self.n_points,
            "n_features": self.n_features,
            "config": asdict(self.config),
            "folds": [asdict(f) for f in self.folds],
            "cells": [asdict(c) for c in self.cells],
            "summary": summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("kind") != "eval_report":
            raise ValueError("not an eval report document")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        cfg = ExperimentConfig(**d["config"])
        return cls(
            dataset=d["dataset"], n_points=d["n_points"], n_features=d["n_features"], config=cfg,
            folds=[FoldOutcome(**f) for f in d["folds"]],
            cells=[FoldOutcome(**c) for c in d.get("cells", [])],
        )


def _cell_task(args):
    x_train, x_test, c, m, cfg, seed, fold = args
    return run_fold(x_train, x_test, c, m, cfg, seed=seed, fold=fold)


def _select(cells: list[FoldOutcome], cfg: ExperimentConfig) -> FoldOutcome | None:
    ok = [c for c in cells if c.ok]
    if not ok:
        return None
    return min(ok, key=lambda c: (c.error(cfg.select_method, cfg.select_on), c.c, c.m))


def grid_search(dataset: RawDataset, cfg: ExperimentConfig, workers: int = 1) -> EvalReport:
    """k-fold cross validation with a per-fold (c, m) search.

    In each fold every grid cell is fitted on the training part; the cell
    with the lowest ``cfg.select_method`` error on ``cfg.select_on`` is
    reported for that fold.
    """
    x = dataset.features
    n = x.shape[0]
    if cfg.folds > n:
        raise ConfigError(f"cannot split {n} points into {cfg.folds} folds")
    plan = kfold_split(n, cfg.folds, cfg.seed, dataset.labels if cfg.stratified else None)
    smallest_train = n - int(plan.sizes().max())
    if smallest_train < max(cfg.c_values):
        raise ConfigError(
            f"smallest training fold has {smallest_train} points, fewer than c={max(cfg.c_values)}")

    if cfg.normalize == "global":
        x = fit_stats(x).apply(x)

    tasks = []
    for fold in range(cfg.folds):
        tr_idx = plan.train_indices(fold)
        te_idx = plan.test_indices(fold)
        x_tr, x_te = x[tr_idx], x[te_idx]
        if cfg.normalize == "fold":
            st = fit_stats(x_tr)
            x_tr, x_te = st.apply(x_tr), st.apply(x_te)
        for c in cfg.c_values:
            for mi, m in enumerate(cfg.m_values):
                tasks.append((x_tr, x_te, c, m, cfg, cell_seed(cfg.seed, fold, c, mi), fold))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        cells = [_cell_task(t) for t in tasks]
    cells.sort(key=lambda o: (o.fold, o.c, o.m))

    folds = []
    for fold in range(cfg.folds):
        chosen = _select([o for o in cells if o.fold == fold], cfg)
        if chosen is None:
            folds.append(FoldOutcome(fold=fold, c=0, m=0.0, status="failed",
                                     message="every grid cell failed"))
        else:
            folds.append(replace(chosen))
    return EvalReport(dataset.source, n, x.shape[1], cfg, folds, cells)


@dataclass(frozen=True)
class SummaryRow:
    method: str
    n_folds: int
    train_mean: float
    train_std: float
    test_mean: float
    test_std: float
    total_mean: float


def _mean_std(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return float(a.mean()), std


def summarize(report: EvalReport) -> list[SummaryRow]:
    """Mean and sample standard deviation of fold errors, per method."""
    good = report.successful
    if not good:
        raise EmptyReportError("no successful folds")
    rows = []
    for method in report.config.methods:
        tr = _mean_std([f.error(method, "train") for f in good])
        te = _mean_std([f.error(method, "test") for f in good])
        tot = float(np.mean([f.error(method, "total") for f in good]))
        rows.append(SummaryRow(method, len(good), tr[0], tr[1], te[0], te[1], tot))
    return rows


def grid_csv(report: EvalReport) -> str:
    """Flat CSV with one line per (fold, c, m, method) grid cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fold", "c", "m", "status", "method", "train", "test", "total",
                "iterations", "converged", "trace_monotone", "fallback_train", "fallback_test",
                "selected"])
    chosen = {(f.fold, f.c, f.m) for f in report.successful}
    for cell in report.cells:
        key = (cell.fold, cell.c, cell.m)
        if not cell.ok:
            w.writerow([cell.fold, cell.c, repr(cell.m), cell.status, "", "", "", "",
                        cell.iterations, cell.converged, cell.trace_monotone, "", "", False])
            continue
        for method in report.config.methods:
            e = cell.errors[method]
            diag = cell.diagnostics.get(method, {})
            w.writerow([cell.fold, cell.c, repr(cell.m), cell.status, method,
                        repr(e["train"]), repr(e["test"]), repr(e["total"]),
                        cell.iterations, cell.converged, cell.trace_monotone,
                        diag.get("train", {}).get("fallback", ""),
                        diag.get("test", {}).get("fallback", ""),
                        key in chosen])
    return buf.getvalue()


def _fmt(x: float, digits: int = 3) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "-"
    if x != 0 and abs(x) < 10 ** (-digits):
        return f"{x:.1e}"
    return f"{x:.{digits}f}"


def format_table(report: EvalReport, digits: int = 3) -> str:
    """Fixed-width table: per-fold parameters and errors, then mean/std."""
    methods = report.config.methods
    width = 9
    head = f"{'':<8}{'':<11}" + "".join(f"{'P' + str(f.fold + 1):>{width}}" for f in report.folds)
    lines = [f"Dataset: {report.dataset}  ({report.n_points} x {report.n_features}, "
             f"{report.config.folds}-fold)", head]

    def row(label, sub, vals):
        lines.append(f"{label:<8}{sub:<11}" + "".join(f"{v:>{width}}" for v in vals))

    row("Params", "c", [str(f.c) if f.ok else "-" for f in report.folds])
    row("", "m", [f"{f.m:g}" if f.ok else "-" for f in report.folds])
    for split in ("train", "test", "total"):
        for i, method in enumerate(methods):
            row(split.capitalize() if i == 0 else "", METHOD_LABELS[method],
                [_fmt(f.error(method, split), digits) if f.ok else "fail" for f in report.folds])
    lines.append("")
    try:
        summary = summarize(report)
    except EmptyReportError:
        lines.append("no successful folds")
        return "\n".join(lines) + "\n"
    lines.append(f"{'':<11}{'train mean':>12}{'train std':>12}{'test mean':>12}{'test std':>12}")
    for r in summary:
        lines.append(f"{METHOD_LABELS[r.method]:<11}{_fmt(r.train_mean, 4):>12}{_fmt(r.train_std, 4):>12}"
                     f"{_fmt(r.test_mean, 4):>12}{_fmt(r.test_std, 4):>12}")
    lines.append(f"successful folds: {summary[0].n_folds}/{len(report.folds)}")
    return "\n".join(lines) + "\n"
