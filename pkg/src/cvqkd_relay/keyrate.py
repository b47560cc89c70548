"""Entropies, mutual information, Holevo bound and asymptotic key rates (bits)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .gaussian import (
    HETERODYNE,
    HOMODYNE,
    CovarianceMatrix,
    Heterodyne,
    Homodyne,
    MeasurementKind,
    PhysicalityError,
    conditional_cm,
    symplectic_eigenvalues,
)

FIBER_LOSS_DB_PER_KM = 0.2
NEG_TOL = 1e-12


def entropy_g(x: float) -> float:
    """G(x) = (x+1) log2(x+1) - x log2(x), von Neumann entropy of a thermal state with mean x."""
    if x < -NEG_TOL or not np.isfinite(x):
        raise ValueError(f"entropy_g needs x >= 0, got {x}")
    if x <= 0:
        return 0.0
    return float((x + 1) * np.log2(x + 1) - x * np.log2(x))


def _observed(v: np.ndarray, mode: int, kind: MeasurementKind):
    """Indices of the quadratures a measurement reveals and the noise it adds."""
    if isinstance(kind, Heterodyne):
        return [2 * mode, 2 * mode + 1], 1.0
    if isinstance(kind, Homodyne):
        return [2 * mode + (0 if kind.quadrature == "x" else 1)], 0.0
    raise TypeError(f"unknown measurement kind {kind!r}")


def mutual_information(cm: CovarianceMatrix, kind_a: MeasurementKind = HETERODYNE,
                       kind_b: MeasurementKind = HOMODYNE) -> float:
    """Shannon mutual information between Alice's and Bob's Gaussian outcomes.

    A homodyne outcome is the marginal of the measured quadrature, which is
    the infinite-squeezing limit of the determinant formula taken in closed
    form. Heterodyne adds one unit of vacuum noise to both quadratures.
    """
    if not isinstance(cm, CovarianceMatrix):
        cm = CovarianceMatrix(cm)
    if cm.n_modes != 2:
        raise ValueError("mutual_information expects a two-mode covariance matrix")
    v = cm.matrix
    ia, na = _observed(v, 0, kind_a)
    ib, nb = _observed(v, 1, kind_b)
    idx = ia + ib
    noise = np.array([na] * len(ia) + [nb] * len(ib))
    m = v[np.ix_(idx, idx)] + np.diag(noise)
    k = len(ia)
    ratio = np.linalg.det(m[:k, :k]) * np.linalg.det(m[k:, k:]) / np.linalg.det(m)
    return max(0.0, 0.5 * float(np.log2(ratio)))


def holevo_bound(cm: CovarianceMatrix, bob_kind: MeasurementKind = HOMODYNE) -> float:
    """Eve's Holevo information on Bob's outcome (reverse reconciliation).

    chi = G((g1-1)/2) + G((g2-1)/2) - G((g3-1)/2), with g1, g2 the symplectic
    eigenvalues of the shared state and g3 that of Alice's mode conditioned
    on Bob's measurement.
    """
    if not isinstance(cm, CovarianceMatrix):
        cm = CovarianceMatrix(cm)
    if cm.n_modes != 2:
        raise ValueError("holevo_bound expects a two-mode covariance matrix")
    g1, g2 = symplectic_eigenvalues(cm)
    (g3,) = symplectic_eigenvalues(conditional_cm(cm, 1, bob_kind))
    chi = entropy_g((g1 - 1) / 2) + entropy_g((g2 - 1) / 2) - entropy_g((g3 - 1) / 2)
    if chi < -1e-9:
        raise PhysicalityError(f"negative Holevo information {chi}")
    return max(chi, 0.0)


class SecretKeyRate(NamedTuple):
    raw: float
    clamped: float


def secret_key_rate(i_ab: float, chi_be: float, beta: float = 0.95, p_success: float = 1.0,
                    sifting: bool = False) -> SecretKeyRate:
    """kappa = p_success * (beta * I_AB - chi_BE), optionally halved for sifting."""
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if not 0 <= p_success <= 1 + 1e-9:
        raise ValueError(f"p_success must lie in [0, 1], got {p_success}")
    if i_ab < 0 or chi_be < 0:
        raise ValueError("information quantities must be non-negative")
    raw = p_success * (beta * i_ab - chi_be)
    if sifting:
        raw *= 0.5
    return SecretKeyRate(raw, max(raw, 0.0))


def plob_bound(eta: float) -> float:
    """Repeaterless capacity -log2(1 - eta) of a pure-loss channel."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return float(-np.log1p(-eta) / np.log(2))


def transmissivity_from_distance(d_km: float, loss_db_per_km: float = FIBER_LOSS_DB_PER_KM) -> float:
    """Fiber transmissivity 10^(-L d / 10)."""
    if d_km < 0 or not np.isfinite(d_km):
        raise ValueError(f"distance must be >= 0, got {d_km}")
    if loss_db_per_km < 0:
        raise ValueError("loss coefficient must be >= 0")
    return float(10 ** (-loss_db_per_km * d_km / 10))


@dataclass(frozen=True)
class KeyRatePoint:
    distance_km: float
    eta: float
    i_ab: float
    chi_be: float
    p_success: float
    kappa: float
    plob: float

    def __post_init__(self):
        if not 0 <= self.p_success <= 1 + 1e-9:
            raise ValueError("p_success must lie in [0, 1]")

    @property
    def kappa_clamped(self) -> float:
        return max(self.kappa, 0.0)
