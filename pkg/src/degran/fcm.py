"""Fuzzy C-Means with a weighted Euclidean distance.

Memberships are stored as a (C, N) partition matrix whose columns sum to one;
prototypes are a (C, n) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import NormalizationStats

WEIGHT_FLOOR = 1e-15
_CHUNK = 2048


class DegenerateClusterError(ValueError):
    """A cluster lost all of its (powered) membership mass."""

    def __init__(self, cluster: int, weight: float):
        super().__init__(f"cluster {cluster} is empty (membership weight {weight:.3g})")
        self.cluster = cluster
        self.weight = weight


@dataclass(frozen=True)
class FcmConfig:
    c: int
    m: float = 2.0
    epsilon: float = 1e-5
    max_iter: int = 200
    seed: int = 0
    restarts: int = 1

    def __post_init__(self):
        if self.c < 1:
            raise ValueError(f"c must be >= 1, got {self.c}")
        if not self.m > 1:
            raise ValueError(f"m must exceed 1, got {self.m}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")


@dataclass
class FcmResult:
    u: np.ndarray
    v: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def sigmas(stds, n: int) -> np.ndarray:
    """Per-feature sigma vector from stats, an array, or ``None`` (all ones)."""
    if stds is None:
        return np.ones(n)
    if isinstance(stds, NormalizationStats):
        stds = stds.stds
    s = np.asarray(stds, dtype=float).reshape(-1)
    if s.size != n:
        raise ValueError(f"expected {n} standard deviations, got {s.size}")
    return s


def distance2(x, v, stds=None) -> float:
    """Weighted squared distance sum_k (x_k - v_k)^2 / sigma_k^2."""
    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if x.size != v.size:
        raise ValueError(f"length mismatch: {x.size} vs {v.size}")
    s = sigmas(stds, x.size)
    return float(np.sum(((x - v) / s) ** 2))


def pairwise_distance2(x, v, stds=None) -> np.ndarray:
    """(N, C) matrix of weighted squared distances between data and prototypes."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape[1] != v.shape[1]:
        raise ValueError(f"feature mismatch: data has {x.shape[1]}, prototypes {v.shape[1]}")
    s = sigmas(stds, x.shape[1])
    xs = x / s
    vs = v / s
    d2 = np.empty((xs.shape[0], vs.shape[0]))
    for start in range(0, xs.shape[0], _CHUNK):
        diff = xs[start:start + _CHUNK, None, :] - vs[None, :, :]
        d2[start:start + _CHUNK] = np.einsum("ijk,ijk->ij", diff, diff)
    return d2


def partition_from_d2(d2: np.ndarray, m: float) -> np.ndarray:
    """Memberships (C, N) from an (N, C) squared-distance matrix.

    A datum sitting exactly on a prototype is assigned crisply to the
    lowest-index such prototype.
    """
    if not m > 1:
        raise ValueError(f"m must exceed 1, got {m}")
    n_pts, c = d2.shape
    u = np.empty((n_pts, c))
    zero = d2 <= 0.0
    hit = zero.any(axis=1)
    rest = ~hit
    if np.any(rest):
        logw = -np.log(d2[rest]) / (m - 1.0)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        u[rest] = w / w.sum(axis=1, keepdims=True)
    if np.any(hit):
        first = np.argmax(zero[hit], axis=1)
        crisp = np.zeros((int(hit.sum()), c))
        crisp[np.arange(first.size), first] = 1.0
        u[hit] = crisp
    return u.T


def update_partition(x, v, m: float, stds=None) -> np.ndarray:
    return partition_from_d2(pairwise_distance2(x, v, stds), m)


def membership_for(x_new, v, m: float, stds=None) -> np.ndarray:
    """Memberships of unseen data with prototypes held fixed."""
    return update_partition(x_new, v, m, stds)


def update_prototypes(x, u, m: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    um = np.asarray(u, dtype=float) ** m
    weights = um.sum(axis=1)
    bad = np.flatnonzero(weights < WEIGHT_FLOOR)
    if bad.size:
        raise DegenerateClusterError(int(bad[0]), float(weights[bad[0]]))
    return (um @ x) / weights[:, None]


def objective(x, u, v, m: float, stds=None) -> float:
    d2 = pairwise_distance2(x, v, stds)
    return float(np.sum((np.asarray(u).T ** m) * d2))


def random_partition(c: int, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform(size=(c, n))
    return u / u.sum(axis=0, keepdims=True)


def _fit_once(x, cfg: FcmConfig, stds, rng) -> FcmResult:
    u = random_partition(cfg.c, x.shape[0], rng)
    trace = []
    converged = False
    it = 0
    v = None
    for it in range(1, cfg.max_iter + 1):
        v = update_prototypes(x, u, cfg.m)
        d2 = pairwise_distance2(x, v, stds)
        u_new = partition_from_d2(d2, cfg.m)
        trace.append(float(np.sum((u_new.T ** cfg.m) * d2)))
        delta = np.max(np.abs(u_new - u))
        u = u_new
        if delta <= cfg.epsilon:
            converged = True
            break
    return FcmResult(u=u, v=v, objective_trace=trace, iterations=it, converged=converged)


def fcm_fit(x, cfg: FcmConfig, stds=None) -> FcmResult:
    """Alternate prototype and partition updates from seeded random partitions.

    Each of ``cfg.restarts`` runs gets its own child seed; the run with the
    lowest final objective wins (lowest restart index on ties).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < cfg.c:
        raise ValueError(f"need at least c={cfg.c} points, got {x.shape[0]}")
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    best = None
    last_err = None
    for child in children:
        try:
            res = _fit_once(x, cfg, stds, np.random.default_rng(child))
        except DegenerateClusterError as err:
            last_err = err
            continue
        if best is None or res.objective < best.objective:
            best = res
    if best is None:
        raise last_err
    return best


def trace_is_monotone(trace, rel_slack: float = 1e-12) -> bool:
    t = np.asarray(trace, dtype=float)
    if t.size < 2:
        return True
    return bool(np.all(t[1:] <= t[:-1] + rel_slack * np.abs(t[:-1])))
