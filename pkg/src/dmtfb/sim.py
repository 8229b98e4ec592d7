"""Monte-Carlo simulation of the block-fading Rayleigh MAC with K-level
quantized, error-prone feedback and feedback-indexed power control.

Public indices (feedback index, received index) are 1-based; the kernels work
0-based internally.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .analytic import SystemConfig, MultiplexPoint, cbar_sequence, check_feasible
from .rng import AUDIT, CALIBRATION, ESTIMATION, Streams, snr_key

log = logging.getLogger(__name__)

OUTAGE_FLOOR = 50


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def rates_for(r, snr: float) -> np.ndarray:
    """Rates in bits per channel use, ``R_s = r_s log2(SNR)``."""
    return np.asarray(tuple(r), dtype=float) * math.log2(snr)


def draw_fading(gen: np.random.Generator, size: int, L: int, n: int, m: int) -> np.ndarray:
    """``(size, L, n, m)`` i.i.d. CN(0, 1) channel matrices."""
    x = gen.standard_normal((size, L, n, m, 2))
    return (x[..., 0] + 1j * x[..., 1]) * math.sqrt(0.5)


# -- single-draw primitives ---------------------------------------------------


def mutual_info_subset(H, powers, S) -> float:
    """``log2 det(I + sum_{i in S} (P_i/m) H_i H_i^dagger)`` in bits.

    ``H`` is a sequence of ``L`` complex ``n x m`` matrices; ``S`` holds 0-based
    user indices.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim == 2:
        H = H[None]
    S = list(S)
    if not S:
        raise ValueError("subset must be non-empty")
    _, n, m = H.shape
    A = np.eye(n, dtype=complex)
    for i in S:
        A += (powers[i] / m) * H[i] @ H[i].conj().T
    chol = np.linalg.cholesky(A)
    return float(2.0 * np.sum(np.log(np.real(np.diag(chol)))) / math.log(2.0))


def outage_indicator(H, R, powers) -> int:
    """1 if any non-empty user subset cannot support its sum rate, else 0."""
    H = np.asarray(H, dtype=complex)
    if H.ndim == 2:
        H = H[None]
    R = np.asarray(R, dtype=float)
    for mask in kernels.subset_masks(H.shape[0]):
        S = np.flatnonzero(mask)
        if mutual_info_subset(H, powers, S) < R[S].sum():
            return 1
    return 0


@dataclass
class FeedbackChannel:
    """Symmetric K-ary feedback link: right index w.p. ``1 - epsilon``, each
    wrong one w.p. ``epsilon / (K - 1)``."""

    K: int
    epsilon: float
    y: float = math.inf
    clamped: bool = False

    def __post_init__(self):
        if self.K == 1:
            self.epsilon = 0.0
        hi = (self.K - 1) / self.K
        if not 0 <= self.epsilon <= hi + 1e-15:
            raise ValueError(f"epsilon must be in [0, {hi}], got {self.epsilon}")

    @classmethod
    def at_snr(cls, K: int, y: float, snr: float) -> "FeedbackChannel":
        """``epsilon = min(SNR^-y, (K-1)/K)``; the clamp keeps the received
        index a valid mixture."""
        if K == 1 or math.isinf(y):
            return cls(K, 0.0, y)
        eps = snr ** (-y)
        hi = (K - 1) / K
        if eps > hi:
            log.info("feedback error %.3g clamped to %.3g at SNR %.3g", eps, hi, snr)
            return cls(K, hi, y, clamped=True)
        return cls(K, eps, y)

    def received_marginal(self, sent_probs) -> np.ndarray:
        """Distribution of the received index given that of the sent one."""
        p = np.asarray(sent_probs, dtype=float)
        if self.K == 1:
            return p.copy()
        e = self.epsilon
        return e / (self.K - 1) + (1 - e * self.K / (self.K - 1)) * p


def corrupt_index(i: int, fb: FeedbackChannel, gen: np.random.Generator) -> int:
    """Pass index ``i`` (1-based) through the feedback channel once."""
    if not 1 <= i <= fb.K:
        raise ValueError(f"index {i} outside 1..{fb.K}")
    u = gen.random(2)
    out = kernels.corrupt_np(np.array([i - 1]), u[None, :1], u[None, 1:], fb.epsilon, fb.K)
    return int(out[0, 0]) + 1


# -- power schedule -----------------------------------------------------------


@dataclass
class PowerSchedule:
    snr: float
    levels: np.ndarray
    exponents: np.ndarray
    analytic_exponents: np.ndarray | None = None
    stage_outages: list = field(default_factory=list)  # (count, trials) per estimated stage
    flagged: bool = False
    notes: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.levels)

    @classmethod
    def fixed(cls, snr: float, levels) -> "PowerSchedule":
        levels = np.asarray(levels, dtype=float)
        return cls(snr, levels, _exponents(levels, snr))


def _exponents(levels, snr):
    if snr == 1.0:
        return np.full(len(levels), np.nan)
    return np.log(levels) / math.log(snr)


def feedback_index(H, R, schedule: PowerSchedule) -> int:
    """Index (1-based) the receiver sends for one channel draw: the lowest
    level that avoids outage, or 1 when even the top level is in outage."""
    H = np.asarray(H, dtype=complex)
    if H.ndim == 2:
        H = H[None]
    L = H.shape[0]
    U = [outage_indicator(H, R, [P] * L) for P in schedule.levels]
    if U[-1] == 1:
        return 1
    return next(k for k, u in enumerate(U) if u == 0) + 1


def schedule_step(snr: float, K: int, eps: float, prev_outage: float) -> float:
    """Next power level given the outage probability at the previous one."""
    if K == 1:
        return snr
    return snr / (K * (eps / (K - 1) + (1 - eps * K / (K - 1)) * prev_outage))


def calibrate_schedule(cfg: SystemConfig, r, snr: float, trials: int, streams: Streams,
                       floor: int = OUTAGE_FLOOR, use_numba=None) -> PowerSchedule:
    """Build the K power levels at ``snr`` sequentially.

    Level 1 is ``SNR / K``; level ``i`` uses a Monte-Carlo estimate of the
    outage probability at level ``i - 1`` with all users there. Each stage draws
    from its own calibration stream.
    """
    r = check_feasible(cfg, r)
    fb = FeedbackChannel.at_snr(cfg.K, cfg.y, snr)
    rates = rates_for(r, snr)
    levels = [snr / cfg.K]
    sched = PowerSchedule(snr, None, None)
    for i in range(2, cfg.K + 1):
        count = _count_level_outage(cfg, rates, levels[-1], trials, streams,
                                    (CALIBRATION, snr_key(10 * math.log10(snr)), i),
                                    use_numba)
        sched.stage_outages.append((count, int(trials)))
        if count < floor:
            sched.flagged = True
            sched.notes.append(f"stage {i}: {count} outage events < floor {floor}")
        est = count / trials if trials > 0 else 1.0
        if est == 0.0 and fb.epsilon == 0.0:
            # no events and no error floor: the next level would be infinite
            est = 1.0 / trials
        nxt = schedule_step(snr, cfg.K, fb.epsilon, est)
        if nxt < levels[-1]:
            sched.notes.append(f"stage {i}: level raised to keep levels non-decreasing")
            nxt = levels[-1]
        levels.append(nxt)
    sched.levels = np.array(levels)
    sched.exponents = _exponents(sched.levels, snr)
    sched.analytic_exponents = analytic_level_exponents(cfg, r)
    return sched


def analytic_level_exponents(cfg: SystemConfig, r) -> np.ndarray:
    """``1`` for level 1, ``1 + min(y, Cbar_{i-1})`` for level ``i``."""
    cbar = cbar_sequence(cfg, r, max(cfg.K - 1, 0))
    out = [1.0]
    for i in range(2, cfg.K + 1):
        prev = cbar[i - 1] if cfg.perfect_feedback else min(cfg.y, cbar[i - 1])
        out.append(1.0 + prev)
    return np.array(out)


def _count_level_outage(cfg, rates, P, trials, streams, key, use_numba):
    total = 0
    for _, size, gen in streams.chunks(trials, *key):
        H = draw_fading(gen, size, cfg.L, cfg.n, cfg.m)
        total += int(kernels.level_outage(H, rates, [P], cfg.m, use_numba).sum())
    return total


# -- the simulated system -----------------------------------------------------


@dataclass
class TrialCounts:
    """Sufficient statistics of a batch of simulated fading blocks."""

    trials: int
    outages: int
    level_outages: np.ndarray     # (K,) outage count with all users at level k
    sent: np.ndarray              # (K,) count of sent index k
    received: np.ndarray          # (L, K) count of user s receiving index k

    @classmethod
    def empty(cls, K, L):
        return cls(0, 0, np.zeros(K, np.int64), np.zeros(K, np.int64), np.zeros((L, K), np.int64))

    def __add__(self, other):
        return TrialCounts(self.trials + other.trials, self.outages + other.outages,
                           self.level_outages + other.level_outages,
                           self.sent + other.sent, self.received + other.received)


def simulate_block(H, rates, levels, fb: FeedbackChannel, u, m, use_numba=None):
    """Run the feedback/power-control loop on a batch of channel draws.

    ``u`` is an ``(N, L, 2)`` array of uniforms driving the feedback errors.
    Returns the level-outage table ``(N, K)``, sent index ``(N,)``, received
    indices ``(N, L)`` and final outage ``(N,)``, all indices 0-based.
    """
    levels = np.asarray(levels, dtype=float)
    U = kernels.level_outage(H, rates, levels, m, use_numba)
    sent = kernels.feedback_from_levels(U)
    recv = kernels.corrupt(sent, u[..., 0], u[..., 1], fb.epsilon, fb.K, use_numba)
    if fb.epsilon == 0.0:
        # every user gets the sent index; outage is the top-level outage
        final = U[:, -1].copy()
    else:
        final = kernels.outage(H, rates, levels[recv], m, use_numba)
    return U, sent, recv, final


def _chunk_counts(cfg, rates, levels, fb, size, gen, use_numba):
    H = draw_fading(gen, size, cfg.L, cfg.n, cfg.m)
    u = gen.random((size, cfg.L, 2))
    U, sent, recv, final = simulate_block(H, rates, levels, fb, u, cfg.m, use_numba)
    K = len(levels)
    received = np.stack([np.bincount(recv[:, s], minlength=K) for s in range(cfg.L)])
    return TrialCounts(size, int(final.sum()), U.sum(axis=0).astype(np.int64),
                       np.bincount(sent, minlength=K), received)


def run_trials(cfg: SystemConfig, r, schedule: PowerSchedule, trials: int, streams: Streams,
               key=(ESTIMATION,), workers: int = 1, use_numba=None) -> TrialCounts:
    """Aggregate :class:`TrialCounts` over ``trials`` blocks.

    Chunks are keyed by ``key + (snr, chunk)``, so the result is identical for
    any ``workers``.
    """
    r = check_feasible(cfg, r)
    snr = schedule.snr
    fb = FeedbackChannel.at_snr(cfg.K, cfg.y, snr)
    rates = rates_for(r, snr)
    chunks = list(streams.chunks(trials, *key, snr_key(10 * math.log10(snr))))

    def job(item):
        _, size, gen = item
        return _chunk_counts(cfg, rates, schedule.levels, fb, size, gen, use_numba)

    total = TrialCounts.empty(cfg.K, cfg.L)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            for part in pool.map(job, chunks):
                total = total + part
    else:
        for item in chunks:
            total = total + job(item)
    return total


def wilson_ci(k: int, n: int, level: float = 0.95):
    if n <= 0:
        return (math.nan, math.nan)
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return (float(ci.low), float(ci.high))


def decomposition_bound(level_probs, eps: float, L: int) -> float:
    """``(1 - L eps) P_K + (L eps / (K-1)) sum_{i<K} P_i``; an equality for one user."""
    p = np.asarray(level_probs, dtype=float)
    K = len(p)
    if K == 1:
        return float(p[0])
    return float((1 - L * eps) * p[-1] + L * eps / (K - 1) * p[:-1].sum())


@dataclass
class OutageEstimate:
    snr_db: float
    trials: int
    outages: int
    probability: float
    ci95: tuple
    reliable: bool
    epsilon: float
    schedule: PowerSchedule
    counts: TrialCounts
    level_probabilities: np.ndarray
    bound: float
    notes: list = field(default_factory=list)

    @property
    def sigma(self) -> float:
        p = self.probability
        return math.sqrt(p * (1 - p) / self.trials) if self.trials else math.nan


def estimate_outage(cfg: SystemConfig, r, schedule: PowerSchedule, trials: int,
                    streams: Streams, floor: int = OUTAGE_FLOOR, workers: int = 1,
                    use_numba=None) -> OutageEstimate:
    """Outage probability of the full system at the schedule's SNR, with the
    per-level outage probabilities and the decomposition bound they imply."""
    snr = schedule.snr
    fb = FeedbackChannel.at_snr(cfg.K, cfg.y, snr)
    counts = run_trials(cfg, r, schedule, trials, streams, workers=workers, use_numba=use_numba)
    notes = []
    if trials > 0:
        p = counts.outages / trials
        levels = counts.level_outages / trials
    else:
        p = math.nan
        levels = np.full(cfg.K, np.nan)
        notes.append("no trials")
    reliable = trials > 0 and counts.outages >= floor and not schedule.flagged
    if trials > 0 and counts.outages < floor:
        notes.append(f"{counts.outages} outage events < floor {floor}")
    if schedule.flagged:
        notes.append("schedule flagged: " + "; ".join(schedule.notes))
    return OutageEstimate(
        snr_db=10 * math.log10(snr), trials=int(trials), outages=counts.outages,
        probability=p, ci95=wilson_ci(counts.outages, trials), reliable=reliable,
        epsilon=fb.epsilon, schedule=schedule, counts=counts,
        level_probabilities=levels, bound=decomposition_bound(levels, fb.epsilon, cfg.L),
        notes=notes,
    )


# -- power-constraint audit ---------------------------------------------------


@dataclass
class PowerAudit:
    snr: float
    trials: int
    sent_probs: np.ndarray               # empirical P(I = i)
    sent_probs_formula: np.ndarray       # from per-level outages
    received_probs: np.ndarray           # (L, K) empirical P(Ibar_s = i)
    received_probs_formula: np.ndarray   # (L, K) mixture formula on empirical P(I = i)
    received_z: np.ndarray               # (L, K)
    mean_power: np.ndarray               # (L,)
    mean_power_sigma: np.ndarray         # (L,)
    marginal_ok: bool
    power_ok: bool
    index_identity_ok: bool

    @property
    def passed(self) -> bool:
        return self.marginal_ok and self.power_ok and self.index_identity_ok

    @property
    def margin(self) -> np.ndarray:
        """``SNR - E[P]`` per user; negative means over budget."""
        return self.snr - self.mean_power


def sent_index_probs(level_probs) -> np.ndarray:
    """Distribution of the sent index implied by the per-level outages."""
    p = np.asarray(level_probs, dtype=float)
    out = np.empty_like(p)
    out[0] = 1 + p[-1] - p[0]
    out[1:] = p[:-1] - p[1:]
    return out


def verify_power_constraint(cfg: SystemConfig, r, schedule: PowerSchedule, trials: int,
                            streams: Streams, nsigma: float = 3.0, use_numba=None) -> PowerAudit:
    """Check the average-power budget and the received-index marginal on a
    fresh stream of ``trials`` blocks."""
    if trials <= 0:
        raise ValueError("audit needs trials > 0")
    fb = FeedbackChannel.at_snr(cfg.K, cfg.y, schedule.snr)
    c = run_trials(cfg, r, schedule, trials, streams, key=(AUDIT,), use_numba=use_numba)
    N = trials
    sent = c.sent / N
    sent_formula = sent_index_probs(c.level_outages / N)
    recv = c.received / N
    recv_formula = np.stack([fb.received_marginal(sent)] * cfg.L)
    sd = np.sqrt(np.maximum(recv_formula * (1 - recv_formula), 1e-300) / N)
    z = (recv - recv_formula) / sd
    P = schedule.levels
    mean = recv @ P
    var = recv @ (P**2) - mean**2
    sigma = np.sqrt(np.maximum(var, 0) / N)
    return PowerAudit(
        snr=schedule.snr, trials=N, sent_probs=sent, sent_probs_formula=sent_formula,
        received_probs=recv, received_probs_formula=recv_formula, received_z=z,
        mean_power=mean, mean_power_sigma=sigma,
        marginal_ok=bool(np.all(np.abs(z) <= nsigma)),
        power_ok=bool(np.all(mean <= schedule.snr + nsigma * sigma)),
        index_identity_ok=bool(np.allclose(sent, sent_formula, atol=0.5 / N)),
    )


# -- runs over an SNR grid ----------------------------------------------------


class SlopeFitError(ValueError):
    pass


@dataclass
class OutageRun:
    config: SystemConfig
    r: MultiplexPoint
    snr_grid_db: list
    seed: int
    estimates: list = field(default_factory=list)
    slope: float | None = None
    slope_stderr: float | None = None

    @property
    def reliable_points(self):
        return [e for e in self.estimates if e.reliable]

    @property
    def flagged(self) -> bool:
        return len(self.reliable_points) < len(self.estimates) or self.slope is None


def fit_slope(snr_linear, probs):
    """``(diversity, stderr)`` from OLS of log10(prob) on log10(SNR)."""
    x = np.log10(np.asarray(snr_linear, dtype=float))
    y = np.log10(np.asarray(probs, dtype=float))
    if len(x) < 3:
        raise SlopeFitError(f"need >= 3 points for a slope fit, got {len(x)}")
    res = stats.linregress(x, y)
    return -float(res.slope), float(res.stderr)


def fit_diversity_slope(run: OutageRun):
    """Fit the diversity order on the run's reliable points only."""
    pts = run.reliable_points
    if len(pts) < 3:
        raise SlopeFitError(f"need >= 3 reliable SNR points, got {len(pts)}")
    return fit_slope(db_to_linear([e.snr_db for e in pts]), [e.probability for e in pts])


def run_outage(cfg: SystemConfig, r, snr_grid_db, trials: int, cal_trials: int, seed: int,
               floor: int = OUTAGE_FLOOR, workers: int = 1, use_numba=None) -> OutageRun:
    """Calibrate, estimate and fit over an SNR grid."""
    r = check_feasible(cfg, r)
    streams = Streams(seed)
    run = OutageRun(cfg, r, [float(s) for s in snr_grid_db], streams.seed)
    for snr_db in run.snr_grid_db:
        snr = float(db_to_linear(snr_db))
        sched = calibrate_schedule(cfg, r, snr, cal_trials, streams, floor, use_numba)
        est = estimate_outage(cfg, r, sched, trials, streams, floor, workers, use_numba)
        log.info("SNR %.1f dB: outage %.3e (%d/%d)%s", snr_db, est.probability,
                 est.outages, est.trials, "" if est.reliable else " [unreliable]")
        run.estimates.append(est)
    try:
        run.slope, run.slope_stderr = fit_diversity_slope(run)
    except SlopeFitError as exc:
        log.warning("no slope: %s", exc)
    return run


# -- SISO closed forms ---------------------------------------------------------


def siso_outage(R, P):
    """``1 - exp(-(2^R - 1)/P)``: outage of a scalar Rayleigh link."""
    return -np.expm1(-np.expm1(np.asarray(R) * math.log(2.0)) / np.asarray(P))


def siso_schedule(snr: float, K: int, y: float, r: float) -> np.ndarray:
    """Power levels built with exact per-level outages instead of Monte Carlo."""
    eps = FeedbackChannel.at_snr(K, y, snr).epsilon
    R = r * math.log2(snr)
    levels = [snr / K]
    for _ in range(2, K + 1):
        levels.append(max(levels[-1], schedule_step(snr, K, eps, float(siso_outage(R, levels[-1])))))
    return np.array(levels)


def siso_system_outage(snr: float, K: int, y: float, r: float, levels=None) -> float:
    """Exact single-user outage with feedback errors, from the per-level outages."""
    levels = siso_schedule(snr, K, y, r) if levels is None else np.asarray(levels)
    eps = FeedbackChannel.at_snr(K, y, snr).epsilon
    R = r * math.log2(snr)
    return decomposition_bound(siso_outage(R, levels), eps, 1)
