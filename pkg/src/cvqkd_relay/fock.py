"""Truncated Fock-space engine built on mixtures of (unnormalised) kets.

A state rho = sum_k w_k |psi_k><psi_k| is stored as a stacked array of kets
with shape (branches, d_0, ..., d_{N-1}) and a weight vector. Kraus channels
fan branches out; projections remove modes. Trace lost to the photon-number
cutoff is accumulated in ``leakage`` and never silently renormalised away.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .gaussian import CovarianceMatrix

DEFAULT_CUTOFF = 8
LEAK_TOL = 1e-6
KRAUS_TOL = 1e-8
MAX_BRANCHES = 100_000
HERALD_MIN_PROB = 1e-15
MEAN_TOL = 1e-9


class CutoffLeakageWarning(UserWarning):
    pass


class BranchLimitError(RuntimeError):
    pass


class HeraldImpossibleError(ValueError):
    pass


# -- state types -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BranchMixture:
    """rho = sum_k weights[k] |kets[k]><kets[k]|; kets need not be normalised."""

    kets: np.ndarray
    weights: np.ndarray
    leakage: float = 0.0
    pruned: float = 0.0
    leak_flag: bool = False

    def __post_init__(self):
        kets = np.asarray(self.kets, dtype=complex)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if kets.ndim < 2 or kets.shape[0] != weights.shape[0]:
            raise ValueError("kets must have shape (branches, d_0, ..., d_N-1) matching weights")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("branch weights must be finite and non-negative")
        if not np.all(np.isfinite(kets)):
            raise ValueError("non-finite amplitudes")
        object.__setattr__(self, "kets", kets)
        object.__setattr__(self, "weights", weights)

    @property
    def dims(self) -> tuple:
        return self.kets.shape[1:]

    @property
    def n_modes(self) -> int:
        return self.kets.ndim - 1

    @property
    def n_branches(self) -> int:
        return self.kets.shape[0]

    def branch_traces(self) -> np.ndarray:
        norms = np.sum(np.abs(self.kets.reshape(self.n_branches, -1)) ** 2, axis=1)
        return self.weights * norms

    @property
    def trace(self) -> float:
        return float(np.sum(self.branch_traces()))

    def normalized(self) -> "BranchMixture":
        t = self.trace
        if t <= 0:
            raise HeraldImpossibleError("cannot normalise a state with zero trace")
        return _replace(self, weights=self.weights / t)

    def density_matrix(self) -> np.ndarray:
        """Dense operator on the full truncated space (rows/cols in C order)."""
        k = self.kets.reshape(self.n_branches, -1)
        return np.einsum("b,bi,bj->ij", self.weights, k, k.conj())


@dataclass(frozen=True, eq=False)
class FockKet:
    """Single pure branch; ``amplitudes`` has shape (d_0, ..., d_{N-1})."""

    amplitudes: np.ndarray
    leakage: float = 0.0
    leak_flag: bool = False

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim < 1:
            raise ValueError("amplitudes need at least one mode axis")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite amplitudes")
        object.__setattr__(self, "amplitudes", a)

    @property
    def dims(self) -> tuple:
        return self.amplitudes.shape

    @property
    def n_modes(self) -> int:
        return self.amplitudes.ndim

    @property
    def cutoff(self) -> int:
        return max(self.dims) - 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def as_mixture(self) -> BranchMixture:
        return BranchMixture(self.amplitudes[None], np.ones(1), leakage=self.leakage,
                             leak_flag=self.leak_flag)


State = Union[FockKet, BranchMixture]


def _replace(m: BranchMixture, **kw) -> BranchMixture:
    fields = dict(kets=m.kets, weights=m.weights, leakage=m.leakage, pruned=m.pruned,
                  leak_flag=m.leak_flag)
    fields.update(kw)
    return BranchMixture(**fields)


def _as_mixture(state: State) -> BranchMixture:
    if isinstance(state, FockKet):
        return state.as_mixture()
    if isinstance(state, BranchMixture):
        return state
    raise TypeError(f"expected FockKet or BranchMixture, got {type(state).__name__}")


def _like(original: State, mixture: BranchMixture) -> State:
    """Return a FockKet if the input was one (single branch, unit weight)."""
    if isinstance(original, FockKet):
        return FockKet(mixture.kets[0] * np.sqrt(mixture.weights[0]), leakage=mixture.leakage,
                       leak_flag=mixture.leak_flag)
    return mixture


def _check_mode(state: State, mode: int):
    if not 0 <= mode < state.n_modes:
        raise IndexError(f"mode {mode} out of range for a {state.n_modes}-mode state")


# -- constructors ------------------------------------------------------------

def fock_state(photons: Sequence[int], cutoff: int = DEFAULT_CUTOFF) -> FockKet:
    photons = list(photons)
    if any(n < 0 or n > cutoff for n in photons):
        raise ValueError("photon numbers must lie in [0, cutoff]")
    a = np.zeros((cutoff + 1,) * len(photons), dtype=complex)
    a[tuple(photons)] = 1.0
    return FockKet(a)


def vacuum(n_modes: int = 1, cutoff: int = DEFAULT_CUTOFF) -> FockKet:
    return fock_state([0] * n_modes, cutoff)


def tensor(*states: State) -> State:
    """Tensor product; a product of kets stays a ket."""
    if all(isinstance(s, FockKet) for s in states):
        out = states[0].amplitudes
        for s in states[1:]:
            out = np.multiply.outer(out, s.amplitudes)
        return FockKet(out, leakage=sum(s.leakage for s in states))
    mix = [_as_mixture(s) for s in states]
    kets, weights = mix[0].kets, mix[0].weights
    for m in mix[1:]:
        b1, b2 = kets.shape[0], m.kets.shape[0]
        dims = kets.shape[1:] + m.dims
        kets = np.einsum("ai,bj->abij", kets.reshape(b1, -1), m.kets.reshape(b2, -1))
        kets = kets.reshape((b1 * b2,) + dims)
        weights = np.outer(weights, m.weights).reshape(-1)
    return BranchMixture(kets, weights, leakage=sum(m.leakage for m in mix),
                         pruned=sum(m.pruned for m in mix))


def tmsv_ket(r: float, cutoff: int = DEFAULT_CUTOFF) -> FockKet:
    """Truncated TMSV: amplitude (-tanh r)^n / cosh r on |n, n>, n <= cutoff.

    Its norm squared is 1 - tanh(r)^(2(cutoff+1)); the deficit is recorded as
    leakage.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if not np.isfinite(r) or r < 0:
        raise ValueError("squeezing r must be finite and >= 0")
    n = np.arange(cutoff + 1)
    a = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    a[n, n] = (-np.tanh(r)) ** n / np.cosh(r)
    return FockKet(a, leakage=float(np.tanh(r) ** (2 * (cutoff + 1))))


def single_photon_entangler(transmissivity: float, cutoff: int = 1) -> FockKet:
    """|1>|0> through the T beamsplitter: sqrt(T)|1,0> + sqrt(1-T)|0,1>."""
    if not 0 < transmissivity <= 1:
        raise ValueError(f"transmissivity must lie in (0, 1], got {transmissivity}")
    return apply_beamsplitter(fock_state([1, 0], cutoff), 0, 1, transmissivity, "c4")


# -- linear optics -----------------------------------------------------------

def beamsplitter_matrix(transmissivity: float, convention: str = "c3") -> np.ndarray:
    """2x2 map of creation operators: a_i^dag -> sum_j S[i, j] a_j^dag.

    ``c3``: a^dag -> sqrt(T) a^dag - sqrt(1-T) b^dag, b^dag -> sqrt(1-T) a^dag + sqrt(T) b^dag,
    i.e. exp(theta (a^dag b - a b^dag)) with cos(theta)^2 = T.
    ``c4``: the transpose (inverse) of ``c3``.
    """
    t, s = np.sqrt(transmissivity), np.sqrt(1 - transmissivity)
    m = np.array([[t, -s], [s, t]])
    if convention == "c3":
        return m
    if convention == "c4":
        return m.T
    raise ValueError(f"unknown beamsplitter convention {convention!r}")


@lru_cache(maxsize=256)
def _passive_tensor(s_bytes: bytes, din: tuple, dout: tuple) -> np.ndarray:
    """Fock-basis tensor U[m', n', m, n] of a two-mode passive unitary, exact per photon sector."""
    s = np.frombuffer(s_bytes, dtype=complex).reshape(2, 2)
    u = np.zeros(dout + din, dtype=complex)
    for m in range(din[0]):
        for n in range(din[1]):
            norm_in = math.factorial(m) * math.factorial(n)
            for p in range(m + 1):
                cp = math.comb(m, p) * s[0, 0] ** p * s[0, 1] ** (m - p)
                for q in range(n + 1):
                    i, j = p + q, m + n - p - q
                    if i >= dout[0] or j >= dout[1]:
                        continue
                    c = cp * math.comb(n, q) * s[1, 0] ** q * s[1, 1] ** (n - q)
                    u[i, j, m, n] += c * math.sqrt(math.factorial(i) * math.factorial(j) / norm_in)
    return u


def _apply_two(kets: np.ndarray, u: np.ndarray, i: int, j: int) -> np.ndarray:
    out = np.tensordot(u, kets, axes=([2, 3], [i + 1, j + 1]))
    return np.moveaxis(out, [0, 1], [i + 1, j + 1])


def _apply_one(kets: np.ndarray, op: np.ndarray, mode: int) -> np.ndarray:
    out = np.tensordot(op, kets, axes=([1], [mode + 1]))
    return np.moveaxis(out, 0, mode + 1)


def _with_leak(state: State, mix: BranchMixture, new_kets: np.ndarray, leak_tol: float) -> State:
    before = mix.branch_traces()
    after = mix.weights * np.sum(np.abs(new_kets.reshape(len(before), -1)) ** 2, axis=1)
    leak = float(np.sum(before - after))
    flag = mix.leak_flag or leak > leak_tol * max(float(np.sum(before)), 1e-300)
    if flag and not mix.leak_flag:
        warnings.warn(f"cutoff leakage {leak:.3g} exceeds tolerance", CutoffLeakageWarning,
                      stacklevel=3)
    out = _replace(mix, kets=new_kets, leakage=mix.leakage + max(leak, 0.0), leak_flag=flag)
    return _like(state, out)


def apply_passive(state: State, mode_i: int, mode_j: int, s: np.ndarray, expand: bool = False,
                  leak_tol: float = LEAK_TOL) -> State:
    """General two-mode passive unitary given by its creation-operator map ``s``."""
    if mode_i == mode_j:
        raise ValueError("beamsplitter modes must differ")
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    mix = _as_mixture(state)
    din = (mix.dims[mode_i], mix.dims[mode_j])
    dout = (din[0] + din[1] - 1,) * 2 if expand else din
    u = _passive_tensor(np.ascontiguousarray(s, dtype=complex).tobytes(), din, dout)
    return _with_leak(state, mix, _apply_two(mix.kets, u, mode_i, mode_j), leak_tol)


def apply_beamsplitter(state: State, mode_i: int, mode_j: int, transmissivity: float,
                       phase_convention: str = "c3", expand: bool = False,
                       leak_tol: float = LEAK_TOL) -> State:
    """Beamsplitter of transmissivity T between two modes.

    With ``expand`` the two mode axes grow so every photon sector fits and
    nothing leaks; otherwise amplitude pushed above the cutoff is dropped,
    counted in ``leakage`` and flagged above ``leak_tol`` (relative).
    """
    if not 0 <= transmissivity <= 1:
        raise ValueError(f"transmissivity must lie in [0, 1], got {transmissivity}")
    s = beamsplitter_matrix(transmissivity, phase_convention)
    return apply_passive(state, mode_i, mode_j, s, expand=expand, leak_tol=leak_tol)


def apply_phase_shift(state: State, mode: int, phi: float) -> State:
    """exp(i phi n) on one mode."""
    if not np.isfinite(phi):
        raise ValueError("phase must be finite")
    _check_mode(state, mode)
    mix = _as_mixture(state)
    d = mix.dims[mode]
    op = np.diag(np.exp(1j * phi * np.arange(d)))
    return _like(state, _replace(mix, kets=_apply_one(mix.kets, op, mode)))


# -- thermal-loss channel ----------------------------------------------------

@dataclass(frozen=True)
class KrausChannel:
    """Thermal loss as pure loss (tau) followed by a quantum-limited amplifier (gain)."""

    eta: float
    epsilon: float
    tau: float
    gain: float
    max_loss_index: int
    max_gain_index: int

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.gain < 1:
            raise ValueError("gain must be >= 1")
        if abs(self.tau * self.gain - self.eta) > 1e-12:
            raise ValueError("tau * gain must equal eta")

    def loss_operators(self, dim: int) -> list:
        """A_l = sqrt((1-tau)^l / l!) tau^(n/2) a^l as dim x dim matrices."""
        ops = []
        for l in range(min(self.max_loss_index, dim - 1) + 1):
            a = np.zeros((dim, dim))
            for n in range(l, dim):
                a[n - l, n] = math.sqrt(math.comb(n, l) * (1 - self.tau) ** l * self.tau ** (n - l))
            ops.append(a)
        return ops

    def gain_operators(self, dim_in: int, dim_out: int) -> list:
        """B_k = sqrt((G-1)^k / (k! G^(k+1))) (a^dag)^k G^(-n/2) as dim_out x dim_in matrices."""
        g = self.gain
        ops = []
        for k in range(self.max_gain_index + 1):
            b = np.zeros((dim_out, dim_in))
            for n in range(dim_in):
                if n + k < dim_out:
                    b[n + k, n] = math.sqrt(math.comb(n + k, k) * (g - 1) ** k / g ** (n + k + 1))
            ops.append(b)
        return ops

    def operators(self, dim: int) -> list:
        """Products B_k A_l truncated to ``dim``, with the untruncated ones for leak accounting."""
        ext = dim + self.max_gain_index
        out = []
        for b in self.gain_operators(dim, ext):
            for a in self.loss_operators(dim):
                out.append(b @ a)
        return out


def _amplifier_tail(n: int, gain: float, k_max: int) -> float:
    """Kraus weight beyond k_max of the amplifier acting on |n>."""
    x = (gain - 1) / gain
    kept = sum(math.comb(n + k, k) * x ** k * (1 - x) ** (n + 1) for k in range(k_max + 1))
    return max(0.0, 1.0 - kept)


def make_kraus_channel(eta: float, epsilon: float, cutoff: int = DEFAULT_CUTOFF,
                       tol: float = KRAUS_TOL) -> KrausChannel:
    """Kraus form of the thermal-loss channel with G = eta eps / 2 + 1 and tau = eta / G.

    All loss indices up to ``cutoff`` are kept (the sum is finite on the
    truncated space); amplifier indices are added until the discarded weight
    on |cutoff> drops below ``tol``.
    """
    if not (np.isfinite(eta) and 0 < eta <= 1):
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    if not (np.isfinite(epsilon) and epsilon >= 0):
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    gain = eta * epsilon / 2 + 1
    k_max = 0
    if gain > 1:
        while _amplifier_tail(cutoff, gain, k_max) >= tol:
            k_max += 1
    return KrausChannel(eta, epsilon, eta / gain, gain, cutoff, k_max)


def apply_channel(state: State, channel: KrausChannel, mode: int,
                  max_branches: int = MAX_BRANCHES, prune: bool = False,
                  leak_tol: float = LEAK_TOL) -> BranchMixture:
    """Fan each branch out over the Kraus pairs (k, l) acting on ``mode``.

    Branches that vanish identically are dropped. Above ``max_branches`` the
    call fails unless ``prune`` is set, in which case the smallest-trace
    branches are discarded and their trace added to ``pruned``.
    """
    _check_mode(state, mode)
    mix = _as_mixture(state)
    d = mix.dims[mode]
    ops = channel.operators(d)
    nb = mix.n_branches
    full = np.stack([_apply_one(mix.kets, op, mode) for op in ops])  # (K, B, ..., ext, ...)
    full = np.moveaxis(full, 0, 1).reshape((nb * len(ops),) + full.shape[2:])
    weights = np.repeat(mix.weights, len(ops))
    full_tr = weights * np.sum(np.abs(full.reshape(len(weights), -1)) ** 2, axis=1)
    kets = np.take(full, range(d), axis=mode + 1)
    tr = weights * np.sum(np.abs(kets.reshape(len(weights), -1)) ** 2, axis=1)
    leak = float(np.sum(full_tr - tr)) + float(np.sum(mix.branch_traces()) - np.sum(full_tr))
    keep = tr > 0
    kets, weights, tr = kets[keep], weights[keep], tr[keep]
    pruned = mix.pruned
    if len(weights) > max_branches:
        if not prune:
            raise BranchLimitError(
                f"{len(weights)} branches exceed the cap of {max_branches}; coarsen the Kraus "
                "truncation, merge branches (merge_branches) or pass prune=True")
        order = np.argsort(-tr, kind="stable")
        drop = order[max_branches:]
        pruned += float(np.sum(tr[drop]))
        sel = np.sort(order[:max_branches])
        kets, weights = kets[sel], weights[sel]
    total = float(np.sum(mix.branch_traces()))
    flag = mix.leak_flag or leak > leak_tol * max(total, 1e-300)
    if flag and not mix.leak_flag:
        warnings.warn(f"Kraus channel leakage {leak:.3g} exceeds tolerance", CutoffLeakageWarning,
                      stacklevel=2)
    return BranchMixture(kets, weights, leakage=mix.leakage + max(leak, 0.0), pruned=pruned,
                         leak_flag=flag)


def merge_branches(state: State, rtol: float = 1e-14) -> BranchMixture:
    """Rewrite the mixture with at most dim(H) orthogonal branches (exact, via SVD).

    Singular values below ``rtol`` times the largest are dropped and counted
    as pruned trace.
    """
    mix = _as_mixture(state)
    k = mix.kets.reshape(mix.n_branches, -1) * np.sqrt(mix.weights)[:, None]
    if k.shape[0] <= k.shape[1] and k.shape[0] <= 1:
        return mix
    _, s, vh = np.linalg.svd(k, full_matrices=False)
    keep = s > rtol * (s[0] if s.size else 0.0)
    dropped = float(np.sum(s[~keep] ** 2))
    kets = (vh[keep] * s[keep, None]).reshape((int(keep.sum()),) + mix.dims)
    return BranchMixture(kets, np.ones(int(keep.sum())), leakage=mix.leakage,
                         pruned=mix.pruned + dropped, leak_flag=mix.leak_flag)


# -- measurement and reduction -----------------------------------------------

def project(state: State, mode: int, fock_outcome: int):
    """Project ``mode`` onto |fock_outcome> and remove it.

    Returns ``(reduced normalised state, probability)`` where the probability
    is the trace ratio after/before.
    """
    _check_mode(state, mode)
    mix = _as_mixture(state)
    if not 0 <= fock_outcome < mix.dims[mode]:
        raise ValueError(f"outcome {fock_outcome} exceeds the cutoff of mode {mode}")
    before = mix.trace
    kets = np.take(mix.kets, fock_outcome, axis=mode + 1)
    if kets.ndim == 1:
        kets = kets[:, None]
    reduced = _replace(mix, kets=kets)
    after = reduced.trace
    prob = after / before if before > 0 else 0.0
    if prob < HERALD_MIN_PROB:
        raise HeraldImpossibleError(f"herald probability {prob:.3g} is effectively zero")
    out = _replace(reduced, weights=reduced.weights / after)
    if isinstance(state, FockKet) and mix.n_modes > 1:
        out = _like(state, out)
    return out, float(prob)


def restrict(state: State, mode: int, max_photons: int) -> State:
    """Keep only components with at most ``max_photons`` in ``mode`` (unnormalised)."""
    _check_mode(state, mode)
    mix = _as_mixture(state)
    kets = np.take(mix.kets, range(max_photons + 1), axis=mode + 1)
    return _like(state, _replace(mix, kets=kets))


def partial_trace(state: State, modes_to_keep: Sequence[int], merge: bool = True) -> BranchMixture:
    """Trace out every mode not listed; traced basis states become extra branches."""
    mix = _as_mixture(state)
    keep = list(modes_to_keep)
    if not keep or len(set(keep)) != len(keep) or any(not 0 <= m < mix.n_modes for m in keep):
        raise ValueError("modes_to_keep must be a non-empty set of valid modes")
    traced = [m for m in range(mix.n_modes) if m not in keep]
    kets = np.transpose(mix.kets, [0] + [m + 1 for m in traced] + [m + 1 for m in keep])
    n_traced = int(np.prod([mix.dims[m] for m in traced])) if traced else 1
    kets = kets.reshape((mix.n_branches * n_traced,) + tuple(mix.dims[m] for m in keep))
    out = _replace(mix, kets=kets, weights=np.repeat(mix.weights, n_traced))
    nz = out.branch_traces() > 0
    out = _replace(out, kets=out.kets[nz], weights=out.weights[nz])
    if merge and out.n_branches > int(np.prod(out.dims)):
        out = merge_branches(out)
    return out


def from_density_matrix(rho: np.ndarray, dims: Sequence[int]) -> BranchMixture:
    """Branch mixture from a dense operator via its eigendecomposition."""
    rho = np.asarray(rho, dtype=complex)
    vals, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = vals > 1e-15 * max(vals.max(), 0)
    return BranchMixture(vecs[:, keep].T.reshape((int(keep.sum()),) + tuple(dims)), vals[keep])


# -- covariance extraction ---------------------------------------------------

def _quadratures(d: int):
    a = np.diag(np.sqrt(np.arange(1, d)), 1)
    return a + a.T, 1j * (a.T - a)


def extract_cm(state: State) -> CovarianceMatrix:
    """CM (x = a + a^dag, p = i(a^dag - a)) of a zero-mean two-mode state.

    Each mode is padded by one Fock level so that second moments of the
    truncated state are exact.
    """
    mix = _as_mixture(state)
    if mix.n_modes != 2:
        raise ValueError("extract_cm expects a state over exactly two modes")
    mix = mix.normalized()
    kets = np.pad(mix.kets, [(0, 0), (0, 1), (0, 1)])
    w = mix.weights
    ys = []
    for mode in range(2):
        x, p = _quadratures(kets.shape[mode + 1])
        ys.append(_apply_one(kets, x, mode))
        ys.append(_apply_one(kets, p, mode))
    flat = kets.reshape(len(w), -1)
    means = np.array([np.real(np.sum(w * np.sum(flat.conj() * y.reshape(len(w), -1), axis=1)))
                      for y in ys])
    if np.max(np.abs(means)) > MEAN_TOL:
        raise ValueError(f"state has non-zero first moments {means}")
    yf = np.stack([y.reshape(len(w), -1) for y in ys])
    v = np.real(np.einsum("b,ibk,jbk->ij", w, yf.conj(), yf))
    return CovarianceMatrix(0.5 * (v + v.T))


def mean_photon_number(state: State, mode: int) -> float:
    mix = _as_mixture(state).normalized()
    n = np.arange(mix.dims[mode])
    probs = np.abs(mix.kets) ** 2
    axes = tuple(i for i in range(1, mix.n_modes + 1) if i != mode + 1)
    marg = np.einsum("b,bn->n", mix.weights, probs.sum(axis=axes) if axes else probs)
    return float(np.dot(n, marg))
