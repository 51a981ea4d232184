"""Augmented degranulation through a modified partition matrix.

Pipeline for data X and prototypes V:

1. Omega_hat = X V^T (V V^T)^+, the least-squares coefficients of X on V.
2. lambda_i fits row i of Omega_hat with a scalar multiple of row i of Xi.
3. Theta_hat = Psi^-1 Lambda_hat.
4. Total least squares on [Theta_hat Omega_hat] gives the modified U^m.
5. X_hat = Theta_hat (U_hat^m)^T V.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics
from .data import NormalizationStats
from .fcm import update_partition
from .granulation import Reconstruction, curvature_factors

SCHEMA_VERSION = 1
COND_LIMIT = 1e12
PSI_FLOOR = 1e-300


class DegenerateRowError(ValueError):
    def __init__(self, row: int):
        super().__init__(f"curvature row {row} has zero norm")
        self.row = row


class PsiUnderflowError(ArithmeticError):
    def __init__(self, datum: int, value: float):
        super().__init__(f"psi for datum {datum} underflowed ({value:.3g})")
        self.datum = datum
        self.value = value


@dataclass
class TlsDiagnostics:
    trailing_singulars: list[float]
    sigma_max: float
    sigma_min: float
    g2_cond: float
    u_hat_min: float
    u_hat_max: float
    fallback: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("g2_cond",):
            if not np.isfinite(d[k]):
                d[k] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TlsDiagnostics":
        d = dict(d)
        if d.get("g2_cond") is None:
            d["g2_cond"] = float("inf")
        return cls(**d)


@dataclass
class AugmentedModel:
    prototypes: np.ndarray
    m: float
    omega_hat: np.ndarray
    lambda_hat: np.ndarray
    theta_hat: np.ndarray
    u_hat_m: np.ndarray
    x_hat: Reconstruction
    diagnostics: TlsDiagnostics
    u: np.ndarray | None = None
    stats: NormalizationStats | None = None
    final: str = "theta"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "augmented_model",
            "m": self.m,
            "final": self.final,
            "prototypes": self.prototypes.tolist(),
            "u_hat_m": self.u_hat_m.tolist(),
            "theta_hat": self.theta_hat.tolist(),
            "diagnostics": self.diagnostics.to_dict(),
            "normalization": None if self.stats is None else self.stats.to_dict(),
        }
        doc.update(self.extra)
        return json.dumps(doc, indent=1)


@dataclass
class SavedModel:
    """The parts of an :class:`AugmentedModel` that survive serialization."""

    prototypes: np.ndarray
    m: float
    u_hat_m: np.ndarray
    theta_hat: np.ndarray
    diagnostics: TlsDiagnostics
    stats: NormalizationStats | None
    final: str
    extra: dict

    def decode(self) -> np.ndarray:
        return reconstruct_from(self.theta_hat, self.u_hat_m, self.prototypes, self.final)


def load_model(text: str) -> SavedModel:
    """Parse a model document written by :meth:`AugmentedModel.to_json`."""
    doc = json.loads(text)
    if not isinstance(doc, dict) or doc.get("kind") != "augmented_model":
        raise ValueError("not an augmented model document")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    try:
        v = np.asarray(doc["prototypes"], dtype=float)
        uhm = np.asarray(doc["u_hat_m"], dtype=float)
        th = np.asarray(doc["theta_hat"], dtype=float)
        diag = TlsDiagnostics.from_dict(doc["diagnostics"])
        norm = doc.get("normalization")
        stats = None if norm is None else NormalizationStats.from_dict(norm)
        m = float(doc["m"])
        final = doc.get("final", "theta")
    except (KeyError, TypeError, ValueError) as err:
        raise ValueError(f"malformed model document: {err}") from err
    if v.ndim != 2 or uhm.ndim != 2 or th.ndim != 1:
        raise ValueError("malformed model document: bad array ranks")
    if uhm.shape != (v.shape[0], th.size):
        raise ValueError(f"malformed model document: u_hat_m shape {uhm.shape} "
                         f"does not match {v.shape[0]} prototypes x {th.size} data")
    known = {"schema_version", "kind", "m", "final", "prototypes", "u_hat_m",
             "theta_hat", "diagnostics", "normalization"}
    extra = {k: val for k, val in doc.items() if k not in known}
    return SavedModel(v, m, uhm, th, diag, stats, final, extra)


def omega_hat(x, v, tol: float | None = None) -> np.ndarray:
    """X V^T (V V^T)^+; then omega_hat @ V projects X onto the row space of V.

    Evaluated as X V^+ (the same matrix, since V^+ = V^T (V V^T)^+) so the
    conditioning of V is not squared. Directions of V that are negligible
    next to the data magnitude are dropped.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape[1] != v.shape[1]:
        raise ValueError(f"feature mismatch: data has {x.shape[1]}, prototypes {v.shape[1]}")
    scale = np.abs(x).max(initial=0.0) * np.sqrt(x.shape[1])
    return x @ numerics.pinv(v, tol, scale=scale)


def f_lambda(lam, xi_row, omega_row) -> float:
    r = lam * np.asarray(xi_row) - np.asarray(omega_row)
    return float(r @ r)


def lambda_hat(xi, omega_hat) -> np.ndarray:
    """Row-wise scalar least squares: lambda_i = <Omega_i, Xi_i> / ||Xi_i||^2."""
    xi = np.asarray(xi, dtype=float)
    om = np.asarray(omega_hat, dtype=float)
    if xi.shape != om.shape:
        raise ValueError(f"shape mismatch: {xi.shape} vs {om.shape}")
    # Rows of Xi can be astronomically large near the crisp limit.
    scale = np.abs(xi).max(axis=1)
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        raise DegenerateRowError(int(bad[0]))
    xs = xi / scale[:, None]
    return np.einsum("ij,ij->i", om, xs) / np.einsum("ij,ij->i", xs, xs) / scale


def theta_hat(psi, lam) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    small = np.flatnonzero(psi < PSI_FLOOR)
    if small.size:
        raise PsiUnderflowError(int(small[0]), float(psi[small[0]]))
    return np.asarray(lam, dtype=float) / psi


def tls_membership(theta_hat, omega_hat, cond_limit: float = COND_LIMIT):
    """Solve Theta_hat (U^m)^T = Omega_hat in the total-least-squares sense.

    Returns ``(u_hat_m, diagnostics)`` with ``u_hat_m`` of shape (C, N). When
    the lower block of the trailing right singular vectors is too badly
    conditioned, the direct solve ``(Theta_hat^+ Omega_hat)^T`` is returned
    instead and ``diagnostics.fallback`` is set.
    """
    th = np.asarray(theta_hat, dtype=float).reshape(-1)
    om = np.asarray(omega_hat, dtype=float)
    n_pts, c = om.shape
    if th.size != n_pts:
        raise ValueError(f"theta_hat has {th.size} entries, omega_hat {n_pts} rows")
    aug = np.hstack([np.diag(th), om])
    f = numerics.svd(aug)
    g_tail = f.right[:, n_pts:]
    g1 = g_tail[:n_pts]
    g2 = g_tail[n_pts:]
    trailing = np.linalg.norm(aug @ g_tail, axis=0)
    g2_cond = numerics.cond(g2)

    fallback = not (np.isfinite(g2_cond) and g2_cond <= cond_limit)
    if fallback:
        inv = np.zeros_like(th)
        big = np.abs(th) > numerics.default_rank_tol(aug.shape) * np.abs(th).max(initial=0.0)
        inv[big] = 1.0 / th[big]
        u_hat_t = inv[:, None] * om
    else:
        u_hat_t = -g1 @ numerics.pinv(g2)
    u_hat_m = u_hat_t.T

    diag = TlsDiagnostics(
        trailing_singulars=[float(s) for s in trailing],
        sigma_max=float(f.singulars[0]),
        sigma_min=float(f.singulars[-1]),
        g2_cond=float(g2_cond),
        u_hat_min=float(u_hat_m.min()),
        u_hat_max=float(u_hat_m.max()),
        fallback=bool(fallback),
    )
    return u_hat_m, diag


def reconstruct_from(theta_hat, u_hat_m, v, final: str = "theta") -> np.ndarray:
    """X_hat from the modified factors.

    ``final="theta"`` uses Theta_hat (U_hat^m)^T V. ``final="rowsum"`` instead
    normalizes each row of (U_hat^m)^T by its sum, mirroring the baseline
    weighted-mean form.
    """
    ut = np.asarray(u_hat_m, dtype=float).T
    v = np.asarray(v, dtype=float)
    if final == "theta":
        return (np.asarray(theta_hat, dtype=float)[:, None] * ut) @ v
    if final == "rowsum":
        return (ut / ut.sum(axis=1, keepdims=True)) @ v
    raise ValueError(f"unknown final reconstruction {final!r}")


def augmented_reconstruct(x, v, m: float, stds=None, tol: float | None = None,
                          final: str = "theta", cond_limit: float = COND_LIMIT) -> AugmentedModel:
    x = numerics.as_matrix(x, "data")
    v = numerics.as_matrix(v, "prototypes")
    u = update_partition(x, v, m, stds)
    psi, xi = curvature_factors(x, v, m, stds)
    om = omega_hat(x, v, tol)
    lam = lambda_hat(xi, om)
    th = theta_hat(psi, lam)
    u_hat_m, diag = tls_membership(th, om, cond_limit)
    x_hat = reconstruct_from(th, u_hat_m, v, final)
    return AugmentedModel(
        prototypes=v, m=float(m), omega_hat=om, lambda_hat=lam, theta_hat=th,
        u_hat_m=u_hat_m, x_hat=Reconstruction(x_hat, "augmented"), diagnostics=diag,
        u=u, final=final,
    )

