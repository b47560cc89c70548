"""Covariance-matrix algebra for zero-mean Gaussian states.

Conventions: hbar = 2, so the vacuum has quadrature variance 1 (shot-noise
units), and quadratures are ordered (x1, p1, x2, p2, ...).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

PHYS_TOL = 1e-9
SYM_TOL = 1e-12
DEGENERATE_Z_TOL = 1e-9

SIGMA_Z = np.diag([1.0, -1.0])
I2 = np.eye(2)


class PhysicalityError(ValueError):
    """Raised when a matrix violates the uncertainty principle (V + i Omega >= 0)."""


class DegenerateHeraldError(ValueError):
    """Raised when the averaged signal amplitude |Z| vanishes and the heralded arm is empty."""


# -- measurement kinds -------------------------------------------------------

@dataclass(frozen=True)
class Homodyne:
    quadrature: str = "x"

    def __post_init__(self):
        if self.quadrature not in ("x", "p"):
            raise ValueError(f"homodyne quadrature must be 'x' or 'p', got {self.quadrature!r}")

    def __str__(self):
        return f"homodyne-{self.quadrature}"


@dataclass(frozen=True)
class Heterodyne:
    def __str__(self):
        return "heterodyne"


MeasurementKind = Union[Homodyne, Heterodyne]
HOMODYNE = Homodyne("x")
HETERODYNE = Heterodyne()


def parse_measurement(name: str) -> MeasurementKind:
    name = name.strip().lower()
    if name in ("heterodyne", "het"):
        return HETERODYNE
    if name in ("homodyne", "hom", "homodyne-x", "hom-x"):
        return Homodyne("x")
    if name in ("homodyne-p", "hom-p"):
        return Homodyne("p")
    raise ValueError(f"unknown measurement kind {name!r}")


# -- types -------------------------------------------------------------------

def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form with 2x2 blocks [[0, 1], [-1, 0]]."""
    if n_modes < 1:
        raise ValueError("n_modes must be positive")
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _raw_symplectic_eigenvalues(v: np.ndarray) -> np.ndarray:
    n = v.shape[0] // 2
    ev = np.abs(np.linalg.eigvals(1j * symplectic_form(n) @ v))
    # eigenvalues of i*Omega*V come in +/- pairs
    return np.sort(ev)[::-1][::2]


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Real symmetric 2N x 2N second-moment matrix of a physical zero-mean state.

    Construction validates symmetry, positive definiteness and the uncertainty
    relation with tolerance ``PHYS_TOL``. The stored array is read-only.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise ValueError(f"covariance matrix must be 2N x 2N, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("covariance matrix has non-finite entries")
        if np.max(np.abs(m - m.T)) > SYM_TOL * max(1.0, np.max(np.abs(m))):
            raise ValueError("covariance matrix is not symmetric")
        m = 0.5 * (m + m.T)
        if np.linalg.eigvalsh(m)[0] <= 0:
            raise PhysicalityError("covariance matrix is not positive definite")
        nu = _raw_symplectic_eigenvalues(m)
        if nu.min() < 1 - PHYS_TOL:
            raise PhysicalityError(
                f"covariance matrix violates the uncertainty relation "
                f"(smallest symplectic eigenvalue {nu.min():.12g})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    def block(self, i: int, j: int) -> np.ndarray:
        """2x2 block coupling mode ``i`` to mode ``j`` (0-based)."""
        return self.matrix[2 * i:2 * i + 2, 2 * j:2 * j + 2]

    def allclose(self, other: "CovarianceMatrix", atol: float = 1e-9) -> bool:
        return self.matrix.shape == other.matrix.shape and np.allclose(
            self.matrix, other.matrix, rtol=0, atol=atol)

    def __repr__(self):
        return f"CovarianceMatrix(n_modes={self.n_modes}, matrix={self.matrix.tolist()!r})"


def _as_array(cm) -> np.ndarray:
    return cm.matrix if isinstance(cm, CovarianceMatrix) else np.asarray(cm, dtype=float)


def two_mode_cm(a: float, b: float, c: float) -> CovarianceMatrix:
    """Standard form [[a I, c Z], [c Z, b I]] with Z the Pauli z matrix."""
    return CovarianceMatrix(np.block([[a * I2, c * SIGMA_Z], [c * SIGMA_Z, b * I2]]))


# -- checks ------------------------------------------------------------------

def _check_squeezing(r):
    if not np.isfinite(r):
        raise ValueError(f"squeezing r must be finite, got {r}")
    if r < 0:
        raise ValueError(f"squeezing r must be >= 0, got {r}")


def _check_channel(eta, eps):
    if not (np.isfinite(eta) and 0 < eta <= 1):
        raise ValueError(f"transmissivity eta must lie in (0, 1], got {eta}")
    if not (np.isfinite(eps) and eps >= 0):
        raise ValueError(f"excess noise epsilon must be >= 0, got {eps}")


# -- construction and channels ----------------------------------------------

def tmsv_cm(r: float) -> CovarianceMatrix:
    _check_squeezing(r)
    return two_mode_cm(np.cosh(2 * r), np.cosh(2 * r), np.sinh(2 * r))


def thermal_loss_matrix(v: np.ndarray, eta: float, eps: float, modes: Sequence[int]) -> np.ndarray:
    """Apply a thermal-loss channel to each listed mode of a raw CM array.

    Per mode: V -> eta V + (1 - eta + eta eps) I, i.e. an added noise
    (1 - eta)/eta + eps referred to the channel input.
    """
    v = np.array(v, dtype=float)
    x = np.ones(v.shape[0])
    y = np.zeros(v.shape[0])
    for m in modes:
        x[2 * m:2 * m + 2] = np.sqrt(eta)
        y[2 * m:2 * m + 2] = 1 - eta + eta * eps
    return x[:, None] * v * x[None, :] + np.diag(y)


def thermal_loss_cm(cm: CovarianceMatrix, eta: float, eps: float) -> CovarianceMatrix:
    """Send the second mode of a two-mode state through a thermal-loss channel."""
    _check_channel(eta, eps)
    v = _as_array(cm)
    if v.shape != (4, 4):
        raise ValueError("thermal_loss_cm expects a two-mode covariance matrix")
    return CovarianceMatrix(thermal_loss_matrix(v, eta, eps, [1]))


def phase_noise_cm(r: float, eta: float, eps: float, phi: float) -> CovarianceMatrix:
    """TMSV with a phase rotation ``phi`` on the transmitted arm, then thermal loss.

    The returned matrix keeps only the ``cos(phi)`` part of the correlation
    block; it is the CM of the equal mixture of the ``+phi`` and ``-phi``
    realisations, which is what survives any symmetric phase average.
    """
    _check_squeezing(r)
    _check_channel(eta, eps)
    if not np.isfinite(phi):
        raise ValueError("phase must be finite")
    a = np.cosh(2 * r)
    return two_mode_cm(a, eta * (a + (1 - eta) / eta + eps),
                       np.sqrt(eta) * np.sinh(2 * r) * np.cos(phi))


def passive_symplectic(u: np.ndarray) -> np.ndarray:
    """Real symplectic matrix of the Heisenberg map a_out = u @ a_in."""
    u = np.asarray(u, dtype=complex)
    n = u.shape[0]
    s = np.zeros((2 * n, 2 * n))
    s[0::2, 0::2] = u.real
    s[0::2, 1::2] = -u.imag
    s[1::2, 0::2] = u.imag
    s[1::2, 1::2] = u.real
    return s


def balanced_network(n: int) -> np.ndarray:
    """Unitary n-port (DFT) spreading one input evenly over n modes."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def averaging_amplitude(phases) -> complex:
    """Z = mean(exp(i phi_j)): amplitude with which the signal survives decoding."""
    return complex(np.mean(np.exp(1j * np.asarray(phases, dtype=float))))


def symmetrize_phase(v: np.ndarray) -> np.ndarray:
    """Average a two-mode CM with its phase-conjugate (x, p) -> (x, -p) image.

    Removes the x-p cross terms, leaving the cos part of every rotation.
    """
    v = np.asarray(v, dtype=float)
    d = np.tile([1.0, -1.0], v.shape[-1] // 2)
    return 0.5 * (v + d[:, None] * v * d[None, :])


def _ua_batch(r: float, eta: float, eps: float, phases: np.ndarray):
    """Exact heralded CMs and vacuum probabilities for a batch of phase samples.

    ``phases`` has shape (S, n). Returns raw 4x4 CMs (S, 4, 4) and heralding
    probabilities (S,). The pre-herald state is Gaussian, so vacuum
    post-selection of the n-1 error arms is Gaussian conditioning.
    """
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    n_samples, n = phases.shape
    n_modes = n + 1
    v0 = np.eye(2 * n_modes)
    v0[:4, :4] = np.block([[np.cosh(2 * r) * I2, np.sinh(2 * r) * SIGMA_Z],
                           [np.sinh(2 * r) * SIGMA_Z, np.cosh(2 * r) * I2]])
    f = balanced_network(n)
    # a_out = F^dag D F a_in on the arms; identical loss commutes with it
    u = np.einsum("ji,sj,jk->sik", f.conj(), np.exp(1j * phases), f)
    s = np.tile(np.eye(2 * n_modes), (n_samples, 1, 1))
    s[:, 2:, 2:] = np.stack([passive_symplectic(ui) for ui in u])
    v = s @ v0 @ np.transpose(s, (0, 2, 1))
    v = np.stack([thermal_loss_matrix(vi, eta, eps, range(1, n_modes)) for vi in v])
    keep, err = slice(0, 4), slice(4, 2 * n_modes)
    m = v[:, err, err] + np.eye(2 * (n - 1))
    c = v[:, keep, err]
    cond = v[:, keep, keep] - c @ np.linalg.solve(m, np.transpose(c, (0, 2, 1)))
    prob = 2.0 ** (n - 1) / np.sqrt(np.linalg.det(m))
    return 0.5 * (cond + np.transpose(cond, (0, 2, 1))), prob


def ua_cm_closed_form(r: float, eta: float, eps: float, phases, symmetrize: bool = True):
    """Unitary-averaged arm: CM of (Alice, output arm) and vacuum-heralding weight.

    ``phases`` holds one phase per copy (two for a single averaging stage).
    The transmitted TMSV mode is spread over ``len(phases)`` arms, each arm
    gets its phase and an identical thermal-loss channel, the network is
    undone and every error arm is post-selected on vacuum.

    Returns ``(CovarianceMatrix, probability)``. With ``symmetrize`` the CM
    is averaged with its phase-conjugate image (see ``symmetrize_phase``).
    """
    _check_squeezing(r)
    _check_channel(eta, eps)
    phases = np.asarray(phases, dtype=float)
    if phases.ndim != 1 or phases.size < 2 or not np.all(np.isfinite(phases)):
        raise ValueError("need at least two finite phase samples")
    if abs(averaging_amplitude(phases)) < DEGENERATE_Z_TOL:
        raise DegenerateHeraldError("phases cancel (|Z| = 0); the output arm carries no signal")
    v, p = _ua_batch(r, eta, eps, phases[None, :])
    v = v[0]
    if symmetrize:
        v = symmetrize_phase(v)
    return CovarianceMatrix(v), float(p[0])


# -- spectra and conditioning ------------------------------------------------

def symplectic_eigenvalues(cm) -> np.ndarray:
    """Symplectic spectrum, descending, clamped to >= 1 within ``PHYS_TOL``."""
    v = _as_array(cm)
    nu = _raw_symplectic_eigenvalues(v)
    if nu.min() < 1 - PHYS_TOL:
        raise PhysicalityError(f"symplectic eigenvalue {nu.min():.12g} < 1")
    return np.maximum(nu, 1.0)


def _measurement_inverse(b: np.ndarray, kind: MeasurementKind) -> np.ndarray:
    if isinstance(kind, Heterodyne):
        return np.linalg.inv(b + I2)
    if isinstance(kind, Homodyne):
        x = np.diag([1.0, 0.0]) if kind.quadrature == "x" else np.diag([0.0, 1.0])
        return np.linalg.pinv(x @ b @ x)
    raise TypeError(f"unknown measurement kind {kind!r}")


def conditional_cm(cm, measured_mode: int, kind: MeasurementKind) -> CovarianceMatrix:
    """CM of the unmeasured mode of a two-mode state after measuring ``measured_mode``.

    The result does not depend on the outcome.
    """
    v = _as_array(cm)
    if v.shape != (4, 4):
        raise ValueError("conditional_cm expects a two-mode covariance matrix")
    if measured_mode not in (0, 1):
        raise ValueError("measured_mode must be 0 or 1")
    kept = 1 - measured_mode
    a = v[2 * kept:2 * kept + 2, 2 * kept:2 * kept + 2]
    b = v[2 * measured_mode:2 * measured_mode + 2, 2 * measured_mode:2 * measured_mode + 2]
    c = v[2 * kept:2 * kept + 2, 2 * measured_mode:2 * measured_mode + 2]
    if isinstance(kind, Heterodyne) and abs(np.linalg.det(b + I2)) < 1e-300:
        raise PhysicalityError("singular heterodyne block; input CM is not physical")
    out = a - c @ _measurement_inverse(b, kind) @ c.T
    return CovarianceMatrix(0.5 * (out + out.T))


def vacuum_probability(v: np.ndarray) -> float:
    """<0|rho|0> for a zero-mean Gaussian state with CM ``v`` (any number of modes)."""
    v = np.asarray(v, dtype=float)
    m = v.shape[0] // 2
    return float(2.0 ** m / np.sqrt(np.linalg.det(v + np.eye(2 * m))))
