"""Matrix form of granulation (V = Phi U^m X) and degranulation (X_hat = Theta (U^m)^T V).

Diagonal matrices are carried as 1-D arrays of their diagonal entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fcm import DegenerateClusterError, WEIGHT_FLOOR, pairwise_distance2

DIST_CLAMP = 1e-12


class DegenerateDatumError(ValueError):
    def __init__(self, datum: int):
        super().__init__(f"datum {datum} has zero total membership weight")
        self.datum = datum


@dataclass(frozen=True)
class GranulationDecomposition:
    phi: np.ndarray    # (C,)
    gamma: np.ndarray  # (C, N) = Phi U^m


@dataclass(frozen=True)
class DegranulationModel:
    theta: np.ndarray  # (N,)
    omega: np.ndarray  # (N, C)
    psi: np.ndarray    # (N,)
    xi: np.ndarray     # (N, C)

    @property
    def a(self) -> np.ndarray:
        return self.psi * self.theta


@dataclass(frozen=True)
class Reconstruction:
    x_hat: np.ndarray
    method: str = "baseline"


def phi_of(u, m: float) -> np.ndarray:
    """Reciprocal of each cluster's total powered membership."""
    weights = (np.asarray(u, dtype=float) ** m).sum(axis=1)
    bad = np.flatnonzero(weights < WEIGHT_FLOOR)
    if bad.size:
        raise DegenerateClusterError(int(bad[0]), float(weights[bad[0]]))
    return 1.0 / weights


def decompose(u, m: float) -> GranulationDecomposition:
    um = np.asarray(u, dtype=float) ** m
    phi = phi_of(u, m)
    return GranulationDecomposition(phi=phi, gamma=phi[:, None] * um)


def granulate(x, u, m: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[1] != x.shape[0]:
        raise ValueError(f"partition has {u.shape[1]} columns but data has {x.shape[0]} rows")
    return decompose(u, m).gamma @ x


def theta_of(u, m: float) -> np.ndarray:
    weights = (np.asarray(u, dtype=float) ** m).sum(axis=0)
    bad = np.flatnonzero(weights <= 0.0)
    if bad.size:
        raise DegenerateDatumError(int(bad[0]))
    return 1.0 / weights


def curvature_factors(x, v, m: float, stds=None, clamp: float = DIST_CLAMP):
    """Psi (N,) and the fuzzy curvature matrix Xi (N, C).

    psi_i = (sum_t d_it^(-2/(m-1)))^(-m),  xi_ij = d_ij^(-2m/(m-1)),
    so that psi_i * xi_ij equals mu_ij^m for memberships computed from ``v``.
    """
    d2 = pairwise_distance2(x, v, stds)
    log_d = 0.5 * np.log(np.maximum(d2, clamp * clamp))
    a = -2.0 / (m - 1.0) * log_d
    top = a.max(axis=1, keepdims=True)
    lse = (top + np.log(np.exp(a - top).sum(axis=1, keepdims=True)))[:, 0]
    psi = np.exp(-m * lse)
    xi = np.exp(-2.0 * m / (m - 1.0) * log_d)
    return psi, xi


def degranulation_model(x, u, v, m: float, stds=None, clamp: float = DIST_CLAMP) -> DegranulationModel:
    u = np.asarray(u, dtype=float)
    theta = theta_of(u, m)
    omega = theta[:, None] * (u ** m).T
    psi, xi = curvature_factors(x, v, m, stds, clamp)
    return DegranulationModel(theta=theta, omega=omega, psi=psi, xi=xi)


def degranulate(u, v, m: float) -> Reconstruction:
    """Reconstruct each datum as the mu^m-weighted mean of the prototypes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[0] != v.shape[0]:
        raise ValueError(f"partition has {u.shape[0]} rows but there are {v.shape[0]} prototypes")
    theta = theta_of(u, m)
    return Reconstruction(x_hat=(theta[:, None] * (u ** m).T) @ v, method="baseline")
