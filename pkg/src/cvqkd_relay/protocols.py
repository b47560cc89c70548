"""End-to-end protocol pipelines: state -> averaged CM -> key rate.

Five variants share one evaluation path: build (or sample) the shared state,
aggregate a Gaussian-equivalent covariance matrix, then apply the reverse
reconciliation key rate with the heralding probability as prefactor.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import fock
from .gaussian import (
    DEGENERATE_Z_TOL,
    HETERODYNE,
    HOMODYNE,
    CovarianceMatrix,
    MeasurementKind,
    _ua_batch,
    symmetrize_phase,
    thermal_loss_cm,
    tmsv_cm,
)
from .keyrate import (
    FIBER_LOSS_DB_PER_KM,
    holevo_bound,
    mutual_information,
    secret_key_rate,
    transmissivity_from_distance,
)

DEFAULT_R_GRID = tuple(np.geomspace(0.05, 1.2, 12))
DEFAULT_MC_SAMPLES = 400
T_AUTO_RANGE = (0.02, 0.98)
N_BATCHES = 10
RELAY_LEAK_TOL = 1e-5  # probability mass lost to truncation before heralding


class CutoffLeakageError(RuntimeError):
    """The Fock cutoff discards more probability than ``RELAY_LEAK_TOL``."""


class Variant(str, Enum):
    BASELINE = "baseline"
    PHASE_NOISE = "phase"
    UNITARY_AVERAGING = "ua"
    NLA_RELAY = "nla"
    HYBRID_UA_NLA = "ua-nla"

    @property
    def is_relay(self) -> bool:
        return self in (Variant.NLA_RELAY, Variant.HYBRID_UA_NLA)


@dataclass(frozen=True)
class ProtocolSpec:
    """Parameters of one protocol configuration.

    ``bob_kind=None`` picks homodyne for the point-to-point variants and
    heterodyne for the relay variants. ``cutoff=None`` picks 8, or 6 for
    the hybrid. ``relay_noise`` fixes how excess noise is split over the two
    relay links: ``"total"`` gives each link half of the end-to-end output
    noise eta_total * epsilon, ``"per-link"`` applies epsilon to each link
    with that link's own transmissivity.
    """

    variant: Variant = Variant.BASELINE
    r: float = 0.5
    beta: float = 0.95
    epsilon: float = 0.02
    sigma: float = 0.0
    ua_copies: int = 1
    scissor_T: Union[float, str] = "auto"
    relay_position: float = 0.5
    alice_kind: MeasurementKind = HETERODYNE
    bob_kind: Optional[MeasurementKind] = None
    mc_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0
    loss_db_per_km: float = FIBER_LOSS_DB_PER_KM
    cutoff: Optional[int] = None
    bob_phase_noise: bool = True
    relay_noise: str = "total"
    sifting: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        v = self.variant
        if not (np.isfinite(self.r) and self.r >= 0):
            raise ValueError("r must be finite and >= 0")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError("epsilon must be >= 0")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError("sigma must be >= 0")
        if self.ua_copies not in (1, 2, 4):
            raise ValueError("ua_copies must be 1 (off), 2 or 4")
        if v == Variant.UNITARY_AVERAGING and self.ua_copies == 1:
            raise ValueError("the ua variant needs ua_copies 2 or 4")
        if v == Variant.HYBRID_UA_NLA and self.ua_copies == 1:
            object.__setattr__(self, "ua_copies", 2)
        if v in (Variant.BASELINE, Variant.PHASE_NOISE, Variant.NLA_RELAY) and self.ua_copies != 1:
            raise ValueError(f"ua_copies is not used by the {v.value} variant")
        if v == Variant.BASELINE and self.sigma != 0:
            raise ValueError("the baseline variant has no phase noise; use variant 'phase'")
        if self.scissor_T != "auto":
            t = float(self.scissor_T)
            if not 0 < t < 1:
                raise ValueError("scissor_T must lie in (0, 1) or be 'auto'")
            object.__setattr__(self, "scissor_T", t)
        if not 0 < self.relay_position < 1:
            raise ValueError("relay_position must lie in (0, 1)")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.loss_db_per_km < 0:
            raise ValueError("loss_db_per_km must be >= 0")
        if self.cutoff is not None and self.cutoff < 2:
            raise ValueError("cutoff must be >= 2")
        if self.relay_noise not in ("total", "per-link"):
            raise ValueError("relay_noise must be 'total' or 'per-link'")

    @property
    def resolved_bob_kind(self) -> MeasurementKind:
        if self.bob_kind is not None:
            return self.bob_kind
        return HETERODYNE if self.variant.is_relay else HOMODYNE

    @property
    def resolved_cutoff(self) -> int:
        if self.cutoff is not None:
            return self.cutoff
        return 6 if self.variant == Variant.HYBRID_UA_NLA else 8

    def with_r(self, r: float) -> "ProtocolSpec":
        return replace(self, r=float(r))


@dataclass(frozen=True)
class ProtocolResult:
    averaged_cm: CovarianceMatrix
    p_success: float
    i_ab: float
    chi_be: float
    kappa: float
    p_ua: float = 1.0
    p_qs: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def kappa_clamped(self) -> float:
        return max(self.kappa, 0.0)


# -- randomness ---------------------------------------------------------------

@lru_cache(maxsize=64)
def _standard_normals(seed: int, n_samples: int, n_shifters: int) -> np.ndarray:
    out = np.empty((n_samples, n_shifters))
    for i in range(n_samples):
        out[i] = np.random.default_rng([seed, i]).standard_normal(n_shifters)
    out.setflags(write=False)
    return out


def phase_samples(seed: int, sigma: float, n_samples: int, n_shifters: int) -> np.ndarray:
    """Phases phi ~ N(0, sigma^2), row = MC sample, column = phase shifter.

    Row ``i`` depends only on ``(seed, i)``, so any split of the samples over
    workers reproduces the same numbers.
    """
    return sigma * _standard_normals(int(seed), int(n_samples), int(n_shifters))


# -- shared evaluation --------------------------------------------------------

def _evaluate(cm: np.ndarray, spec: ProtocolSpec, p_success: float):
    cov = CovarianceMatrix(cm)
    i_ab = mutual_information(cov, spec.alice_kind, spec.resolved_bob_kind)
    chi = holevo_bound(cov, spec.resolved_bob_kind)
    kappa = secret_key_rate(i_ab, chi, spec.beta, min(p_success, 1.0), spec.sifting).raw
    return cov, i_ab, chi, kappa


def _aggregate(cms: np.ndarray, probs: np.ndarray, spec: ProtocolSpec,
               diagnostics=None, p_ua=None, p_qs=None) -> ProtocolResult:
    """Herald-weighted mean CM, mean probability, and a batch-means error of kappa."""
    cms = np.asarray(cms, dtype=float)
    probs = np.asarray(probs, dtype=float)
    mean_cm = np.einsum("s,sij->ij", probs, cms) / probs.sum()
    p = float(probs.mean())
    cov, i_ab, chi, kappa = _evaluate(mean_cm, spec, p)
    diag = dict(diagnostics or {})
    diag["mc_samples"] = len(probs)
    diag["mc_stderr"] = _batch_stderr(cms, probs, spec) if len(probs) >= 2 * N_BATCHES else 0.0
    return ProtocolResult(cov, p, i_ab, chi, kappa,
                          p_ua=float(np.mean(p_ua)) if p_ua is not None else p,
                          p_qs=float(np.mean(p_qs)) if p_qs is not None else 1.0,
                          diagnostics=diag)


def _batch_stderr(cms, probs, spec) -> float:
    ks = []
    for idx in np.array_split(np.arange(len(probs)), N_BATCHES):
        w = probs[idx]
        if w.sum() <= 0:
            continue
        m = np.einsum("s,sij->ij", w, cms[idx]) / w.sum()
        try:
            ks.append(_evaluate(m, spec, float(w.mean()))[3])
        except ValueError:
            continue
    if len(ks) < 2:
        return float("nan")
    return float(np.std(ks, ddof=1) / np.sqrt(len(ks)))


def _link_eta(spec: ProtocolSpec, distance: float) -> float:
    return transmissivity_from_distance(distance, spec.loss_db_per_km)


# -- point-to-point protocols -------------------------------------------------

def run_baseline(spec: ProtocolSpec, distance: float, backend: str = "gaussian") -> ProtocolResult:
    """Thermal-loss channel only; deterministic, p_success = 1."""
    if spec.variant != Variant.BASELINE:
        raise ValueError("run_baseline needs variant 'baseline'")
    eta = _link_eta(spec, distance)
    if backend == "gaussian":
        cm = thermal_loss_cm(tmsv_cm(spec.r), eta, spec.epsilon).matrix
        diag = {}
    elif backend == "fock":
        cm, diag = _fock_arm_cm(spec.r, eta, spec.epsilon, [0.0], spec.resolved_cutoff)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    cov, i_ab, chi, kappa = _evaluate(cm, spec, 1.0)
    return ProtocolResult(cov, 1.0, i_ab, chi, kappa, diagnostics=dict(diag, mc_stderr=0.0))


def run_phase_noise(spec: ProtocolSpec, distance: float, backend: str = "gaussian") -> ProtocolResult:
    """Monte-Carlo average over a Gaussian phase on the transmitted arm; p_success = 1.

    The correlation block ends up scaled by the sample mean of cos(phi).
    """
    if spec.variant != Variant.PHASE_NOISE:
        raise ValueError("run_phase_noise needs variant 'phase'")
    eta = _link_eta(spec, distance)
    if spec.sigma == 0:
        base = replace(spec, variant=Variant.BASELINE)
        res = run_baseline(base, distance, backend)
        return replace(res, diagnostics=dict(res.diagnostics, mc_samples=0))
    phis = phase_samples(spec.seed, spec.sigma, spec.mc_samples, 1)[:, 0]
    if backend == "gaussian":
        base = thermal_loss_cm(tmsv_cm(spec.r), eta, spec.epsilon).matrix
        cms = np.repeat(base[None], len(phis), axis=0)
        corr = np.cos(phis)
        cms[:, :2, 2:] *= corr[:, None, None]
        cms[:, 2:, :2] *= corr[:, None, None]
        diag = {}
    elif backend == "fock":
        cms, diag = [], {"leakage": 0.0}
        for phi in phis:
            cm, d = _fock_arm_cm(spec.r, eta, spec.epsilon, [phi], spec.resolved_cutoff)
            cms.append(symmetrize_phase(cm))
            diag["leakage"] = max(diag["leakage"], d["leakage"])
        cms = np.array(cms)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return _aggregate(cms, np.ones(len(phis)), spec, diagnostics=diag)


def run_unitary_averaging(spec: ProtocolSpec, distance: float, phases: Optional[np.ndarray] = None,
                          backend: str = "gaussian") -> ProtocolResult:
    """Unitary averaging over ``ua_copies`` arms with vacuum heralding of the error arms.

    Per sample the heralded CM and herald probability are exact; the
    aggregate CM is the probability-weighted mean and p_success the plain
    mean. ``phases`` (shape (samples, copies)) overrides the sampler.
    """
    if spec.variant != Variant.UNITARY_AVERAGING:
        raise ValueError("run_unitary_averaging needs variant 'ua'")
    eta = _link_eta(spec, distance)
    n = spec.ua_copies
    if phases is None:
        phases = phase_samples(spec.seed, spec.sigma, spec.mc_samples, n)
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    if phases.shape[1] != n:
        raise ValueError(f"expected {n} phases per sample, got {phases.shape[1]}")
    z = np.abs(np.mean(np.exp(1j * phases), axis=1))
    good = z >= DEGENERATE_Z_TOL
    skipped = int(np.sum(~good))
    if not np.any(good):
        raise ValueError("every phase sample was degenerate (|Z| = 0)")
    phases = phases[good]
    diag = {"skipped_samples": skipped}
    if backend == "gaussian":
        cms, probs = _ua_batch(spec.r, eta, spec.epsilon, phases)
        cms = symmetrize_phase(cms)
    elif backend == "fock":
        cms, probs, leak = [], [], 0.0
        for ph in phases:
            cm, d = _fock_arm_cm(spec.r, eta, spec.epsilon, ph, spec.resolved_cutoff)
            cms.append(symmetrize_phase(cm))
            probs.append(d["p_herald"])
            leak = max(leak, d["leakage"])
        cms, probs = np.array(cms), np.array(probs)
        diag["leakage"] = leak
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return _aggregate(cms, probs, spec, diagnostics=diag, p_ua=probs)


# -- Fock-backend pipelines ---------------------------------------------------

def _ua_network(state, signal: int, ancillas: Sequence[int], decode: bool = False):
    """Nested balanced beamsplitters spreading ``signal`` evenly over 1 + len(ancillas) arms.

    ``decode=True`` applies the exact inverse network.
    """
    arms = [signal] + list(ancillas)
    if len(arms) & (len(arms) - 1):
        raise ValueError("the Fock UA network needs a power-of-two number of arms")
    pairs = []
    width = len(arms) // 2
    while width >= 1:
        for start in range(0, len(arms), 2 * width):
            for i in range(start, start + width):
                pairs.append((arms[i], arms[i + width]))
        width //= 2
    if decode:
        for i, j in reversed(pairs):
            state = fock.apply_beamsplitter(state, i, j, 0.5, "c3")
    else:
        for i, j in pairs:
            state = fock.apply_beamsplitter(state, i, j, 0.5, "c4")
    return state


def transmit(state, signal: int, ancillas: Sequence[int], phases: Sequence[float],
             channel: fock.KrausChannel):
    """Send ``signal`` (optionally unitary-averaged over ``ancillas``) through a noisy link.

    Ancilla modes must be the trailing modes of ``state``; they are removed
    by vacuum heralding. Returns ``(mixture, herald probability)``.
    """
    phases = list(phases)
    if len(phases) != 1 + len(ancillas):
        raise ValueError("need one phase per arm")
    if ancillas:
        state = _ua_network(state, signal, ancillas)
    for mode, phi in zip([signal] + list(ancillas), phases):
        state = fock.apply_phase_shift(state, mode, phi)
    if ancillas:
        state = _ua_network(state, signal, ancillas, decode=True)
    prob = 1.0
    for mode in sorted(ancillas, reverse=True):
        state = fock.apply_channel(state, channel, mode)
        state, p = fock.project(state, mode, 0)
        prob *= p
    state = fock.apply_channel(state, channel, signal)
    return fock.merge_branches(state), prob


def _fock_arm_cm(r: float, eta: float, eps: float, phases: Sequence[float], cutoff: int):
    """TMSV arm (optionally averaged) through the Fock backend; returns (raw CM, diagnostics).

    The CM is rotated by pi on Bob's mode so that it matches the +sinh(2r)
    correlation sign used by the Gaussian closed forms.
    """
    n = len(phases)
    state = fock.tmsv_ket(r, cutoff)
    for _ in range(n - 1):
        state = fock.tensor(state, fock.vacuum(1, cutoff))
    channel = fock.make_kraus_channel(eta, eps, cutoff)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", fock.CutoffLeakageWarning)
        mix, prob = transmit(state, 1, list(range(2, n + 1)), phases, channel)
    cm = fock.extract_cm(mix).matrix
    flip = np.diag([1.0, 1.0, -1.0, -1.0])
    return flip @ cm @ flip, {"leakage": mix.leakage, "pruned": mix.pruned, "p_herald": prob}


def auto_scissor_T(eta_a: float, eta_b: float) -> float:
    """T with g^2 = eta_b / eta_a: the gain seen across Bob's link undoes Alice's link loss.

    Equals 1/2 at symmetric placement; clamped to ``T_AUTO_RANGE``.
    """
    t = eta_a / (eta_a + eta_b)
    return float(np.clip(t, *T_AUTO_RANGE))


def relay_links(spec: ProtocolSpec, distance: float):
    """(eta_a, eta_b, eps_a, eps_b) for Alice->Charlie and Bob->Charlie."""
    loss = spec.loss_db_per_km
    eta_a = transmissivity_from_distance(distance * spec.relay_position, loss)
    eta_b = transmissivity_from_distance(distance * (1 - spec.relay_position), loss)
    if spec.relay_noise == "per-link":
        return eta_a, eta_b, spec.epsilon, spec.epsilon
    eta_tot = transmissivity_from_distance(distance, loss)
    # each link adds eta_tot * eps / 2 of output noise: eta_link * eps_link = eta_tot * eps / 2
    return eta_a, eta_b, spec.epsilon * eta_tot / (2 * eta_a), spec.epsilon * eta_tot / (2 * eta_b)


def relay_sample(r: float, T: float, links, phases_a: Sequence[float], phases_b: Sequence[float],
                 cutoff: int, bob_cutoff: int = 3, keep_pattern: tuple = (0, 1)):
    """One realisation of the (optionally unitary-averaged) quantum-scissor relay.

    Modes: Alice (a1 kept, a2 sent), Bob (b1 sent, b2 kept) plus trailing UA
    ancillas. Charlie mixes a2 and b1 on a balanced beamsplitter and heralds
    ``keep_pattern`` photons on (a2, b1).

    Returns ``(raw CM of (a1, b2), p_ua, p_qs, diagnostics)`` where p_qs
    already carries the factor 2 for the two equivalent click patterns.
    """
    eta_a, eta_b, eps_a, eps_b = links
    chan_a = fock.make_kraus_channel(eta_a, eps_a, cutoff)
    chan_b = fock.make_kraus_channel(eta_b, eps_b, bob_cutoff)
    n_a, n_b = len(phases_a), len(phases_b)

    alice = fock.tmsv_ket(r, cutoff)
    for _ in range(n_a - 1):
        alice = fock.tensor(alice, fock.vacuum(1, cutoff))
    bob = fock.single_photon_entangler(T, bob_cutoff)
    for _ in range(n_b - 1):
        bob = fock.tensor(bob, fock.vacuum(1, bob_cutoff))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", fock.CutoffLeakageWarning)
        alice, p_a = transmit(alice, 1, list(range(2, n_a + 1)), phases_a, chan_a)
        bob, p_b = transmit(bob, 0, list(range(2, n_b + 1)), phases_b, chan_b)

    # Charlie's click projector lives in the one-photon sector of (a2, b1),
    # so higher components can be dropped before the beamsplitter.
    ta, tb = alice.trace, bob.trace
    alice = fock.merge_branches(fock.restrict(alice, 1, 1))
    bob = fock.merge_branches(fock.restrict(bob, 0, 1))
    p_sector = (alice.trace / ta) * (bob.trace / tb)
    joint = fock.tensor(alice, bob)  # (a1, a2, b1, b2)
    joint = fock.apply_beamsplitter(joint, 1, 2, 0.5, "c3", expand=True)
    joint, p1 = fock.project(joint, 2, keep_pattern[1])
    joint, p2 = fock.project(joint, 1, keep_pattern[0])
    p_qs = 2.0 * p_sector * p1 * p2
    cm = fock.extract_cm(joint).matrix
    diag = {"leakage": joint.leakage, "pruned": joint.pruned}
    return cm, p_a * p_b, p_qs, diag


def _run_relay(spec: ProtocolSpec, distance: float, phases: Optional[np.ndarray]) -> ProtocolResult:
    links = relay_links(spec, distance)
    T = auto_scissor_T(links[0], links[1]) if spec.scissor_T == "auto" else spec.scissor_T
    n = spec.ua_copies
    n_shifters = 2 * n
    if phases is None:
        if spec.sigma == 0:
            phases = np.zeros((1, n_shifters))
        else:
            phases = phase_samples(spec.seed, spec.sigma, spec.mc_samples, n_shifters)
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    if phases.shape[1] != n_shifters:
        raise ValueError(f"expected {n_shifters} phases per sample")
    if not spec.bob_phase_noise:
        phases = phases.copy()
        phases[:, n:] = 0.0
    cms, p_ua, p_qs, leak, pruned = [], [], [], 0.0, 0.0
    for row in phases:
        cm, pu, pq, d = relay_sample(spec.r, T, links, row[:n], row[n:], spec.resolved_cutoff)
        cms.append(symmetrize_phase(cm))
        p_ua.append(pu)
        p_qs.append(pq)
        leak = max(leak, d["leakage"])
        pruned = max(pruned, d["pruned"])
        if leak > RELAY_LEAK_TOL:
            raise CutoffLeakageError(
                f"cutoff {spec.resolved_cutoff} loses {leak:.2g} of the state at r={spec.r:g}; "
                "raise the cutoff or lower r")
    p_ua, p_qs = np.array(p_ua), np.array(p_qs)
    probs = p_ua * p_qs
    diag = {"leakage": leak, "pruned": pruned, "scissor_T": T}
    return _aggregate(np.array(cms), probs, spec, diagnostics=diag, p_ua=p_ua, p_qs=p_qs)


def run_nla_relay(spec: ProtocolSpec, distance: float, phases: Optional[np.ndarray] = None) -> ProtocolResult:
    """Quantum-scissor relay at Charlie; Fock backend, heterodyne at both ends by default."""
    if spec.variant != Variant.NLA_RELAY:
        raise ValueError("run_nla_relay needs variant 'nla'")
    return _run_relay(spec, distance, phases)


def run_hybrid_ua_nla(spec: ProtocolSpec, distance: float, phases: Optional[np.ndarray] = None) -> ProtocolResult:
    """Unitary averaging on both transmitted arms, then the quantum-scissor relay."""
    if spec.variant != Variant.HYBRID_UA_NLA:
        raise ValueError("run_hybrid_ua_nla needs variant 'ua-nla'")
    return _run_relay(spec, distance, phases)


RUNNERS: dict = {
    Variant.BASELINE: run_baseline,
    Variant.PHASE_NOISE: run_phase_noise,
    Variant.UNITARY_AVERAGING: run_unitary_averaging,
    Variant.NLA_RELAY: run_nla_relay,
    Variant.HYBRID_UA_NLA: run_hybrid_ua_nla,
}


def run_protocol(spec: ProtocolSpec, distance: float) -> ProtocolResult:
    return RUNNERS[spec.variant](spec, distance)


# -- modulation optimisation and analytics ------------------------------------

def optimize_modulation(spec: ProtocolSpec, distance: float,
                        r_grid: Sequence[float] = DEFAULT_R_GRID,
                        runner: Optional[Callable] = None):
    """Best squeezing on ``r_grid`` by raw key rate; ties go to the smaller r.

    Grid points the Fock cutoff cannot represent are skipped and counted in
    ``diagnostics["skipped_r"]``.
    """
    grid = [float(r) for r in r_grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("r_grid must be non-empty and strictly ascending")
    runner = runner or run_protocol
    best_r, best, skipped, last_error = None, None, 0, None
    for r in grid:
        try:
            res = runner(spec.with_r(r), distance)
        except CutoffLeakageError as exc:
            skipped, last_error = skipped + 1, exc
            continue
        if best is None or res.kappa > best.kappa:
            best_r, best = r, res
    if best is None:
        raise last_error
    if skipped:
        best = replace(best, diagnostics=dict(best.diagnostics, skipped_r=skipped))
    return best_r, best


def ua_low_noise_approx(r: float, v: float, n: int):
    """Low-noise expectations (<tanh r'>, <cos phi_beta>) for phase variance v over n copies."""
    if v < 0 or n < 1:
        raise ValueError("need v >= 0 and n >= 1")
    return (1 - (v / 2 - v / (2 * n))) * np.tanh(r), float(np.cos(np.sqrt(v / n)))


def ua_phase_statistics(r: float, v: float, n: int, n_samples: int, seed: int = 0):
    """MC means and standard errors of |Z| tanh r and cos(arg Z)."""
    phases = phase_samples(seed, np.sqrt(v), n_samples, n)
    z = np.mean(np.exp(1j * phases), axis=1)
    t = np.abs(z) * np.tanh(r)
    c = np.cos(np.angle(z))
    se = lambda x: float(np.std(x, ddof=1) / np.sqrt(len(x)))
    return {"tanh_r_prime": (float(t.mean()), se(t)), "cos_phi_beta": (float(c.mean()), se(c))}
