"""Exact diversity exponents for the MIMO MAC with quantized, noisy feedback.

All exponents are in SNR-exponent units: an outage probability that decays
like ``SNR**-d`` has exponent ``d``. Every quantity here is a min/composition
of piecewise-linear functions, so nothing is optimized at runtime.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

TOL = 1e-9


class InfeasibleRateError(ValueError):
    """Raised when a multiplexing vector violates ``sum_S r < min(|S| m, n)``."""

    def __init__(self, subset, total, limit):
        self.subset = tuple(subset)
        self.total = total
        self.limit = limit
        users = ",".join(str(s + 1) for s in self.subset)
        super().__init__(
            f"infeasible multiplexing gains: users {{{users}}} sum to "
            f"{total:g}, must be < min(|S|m, n) = {limit:g}"
        )


@dataclass(frozen=True)
class SystemConfig:
    """Antennas per user ``m``, receive antennas ``n``, ``L`` users, ``K``
    feedback indices and feedback error exponent ``y`` (``math.inf`` means
    error-free feedback)."""

    m: int
    n: int
    L: int = 1
    K: int = 1
    y: float = math.inf

    def __post_init__(self):
        for name in ("m", "n", "L", "K"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        y = float(self.y)
        if math.isnan(y) or y < 0:
            raise ValueError(f"y must be >= 0 or inf, got {self.y!r}")
        object.__setattr__(self, "y", y)

    @property
    def perfect_feedback(self) -> bool:
        return math.isinf(self.y)

    @property
    def mn(self) -> int:
        return self.m * self.n

    def with_(self, **changes) -> "SystemConfig":
        vals = dict(m=self.m, n=self.n, L=self.L, K=self.K, y=self.y)
        vals.update(changes)
        return SystemConfig(**vals)


@dataclass(frozen=True)
class MultiplexPoint:
    """Per-user multiplexing gains ``r`` (rates ``R_s = r_s log SNR``)."""

    r: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in np.atleast_1d(self.r))
        if not r:
            raise ValueError("multiplexing vector must be non-empty")
        if any(not math.isfinite(v) or v < 0 for v in r):
            raise ValueError(f"multiplexing gains must be finite and >= 0: {r}")
        object.__setattr__(self, "r", r)

    def __len__(self):
        return len(self.r)

    def __iter__(self):
        return iter(self.r)

    @classmethod
    def zeros(cls, L: int) -> "MultiplexPoint":
        return cls((0.0,) * L)


def _as_point(r) -> MultiplexPoint:
    return r if isinstance(r, MultiplexPoint) else MultiplexPoint(r)


def subsets(L: int):
    """All non-empty subsets of ``range(L)`` as tuples, smallest first."""
    for size in range(1, L + 1):
        yield from itertools.combinations(range(L), size)


def check_feasible(cfg: SystemConfig, r) -> MultiplexPoint:
    """Validate ``r`` against ``cfg``; returns it as a :class:`MultiplexPoint`."""
    r = _as_point(r)
    if len(r) != cfg.L:
        raise ValueError(f"expected {cfg.L} multiplexing gains, got {len(r)}")
    for S in subsets(cfg.L):
        total = sum(r.r[i] for i in S)
        limit = min(len(S) * cfg.m, cfg.n)
        if not total < limit:
            raise InfeasibleRateError(S, total, limit)
    return r


def g_exponent(m: int, n: int, r: float, p: float) -> float:
    """Outage exponent of an m x n Rayleigh link at multiplexing gain ``r``
    and power exponent ``p``.

    Piecewise linear through ``(k p, p (m-k)(n-k))`` for
    ``k = 0..min(m, n)`` and zero beyond ``min(m, n) p``.
    """
    if m < 1 or n < 1:
        raise ValueError("antenna counts must be >= 1")
    if not p > 0:
        raise ValueError(f"power exponent must be > 0, got {p!r}")
    if r < 0:
        raise ValueError(f"multiplexing gain must be >= 0, got {r!r}")
    kmax = min(m, n)
    x = r / p
    if abs(x - round(x)) < 1e-12:
        x = float(round(x))
    if x >= kmax:
        return 0.0
    k = int(math.floor(x))
    t = x - k
    left = (m - k) * (n - k)
    right = (m - k - 1) * (n - k - 1)
    if t == 0.0:
        return p * left
    return p * (left + t * (right - left))


def d_exponent(cfg: SystemConfig, r, p: float) -> float:
    """MAC outage exponent with every user at power exponent ``p``:
    the worst subset ``S`` seen as one ``|S| m x n`` link."""
    r = check_feasible(cfg, r)
    return min(
        g_exponent(len(S) * cfg.m, cfg.n, sum(r.r[i] for i in S), p)
        for S in subsets(cfg.L)
    )


def _d_unchecked(cfg, r, p):
    return min(
        g_exponent(len(S) * cfg.m, cfg.n, sum(r.r[i] for i in S), p)
        for S in subsets(cfg.L)
    )


def c_sequence(cfg: SystemConfig, r, jmax: int) -> list[float]:
    """``[C_0, ..., C_jmax]`` of the error-free feedback recursion."""
    r = check_feasible(cfg, r)
    out = [0.0]
    for _ in range(jmax):
        out.append(_d_unchecked(cfg, r, 1.0 + out[-1]))
    return out


def cbar_sequence(cfg: SystemConfig, r, jmax: int) -> list[float]:
    """``[Cbar_0, ..., Cbar_jmax]``; each step caps the previous exponent at ``y``."""
    r = check_feasible(cfg, r)
    out = [0.0]
    for _ in range(jmax):
        prev = out[-1] if cfg.perfect_feedback else min(cfg.y, out[-1])
        out.append(_d_unchecked(cfg, r, 1.0 + prev))
    return out


def c_recursion(cfg: SystemConfig, r, j: int) -> float:
    if j < 0:
        raise ValueError("j must be >= 0")
    return c_sequence(cfg, r, j)[j]


def cbar_recursion(cfg: SystemConfig, r, j: int) -> float:
    if j < 0:
        raise ValueError("j must be >= 0")
    return cbar_sequence(cfg, r, j)[j]


def d_opt(cfg: SystemConfig, r) -> float:
    """Achievable diversity with ``cfg.K`` feedback indices.

    ``K = 1`` is the no-feedback exponent ``D(r, 1)``. Otherwise
    ``min(Cbar_K, y + C_1)``; error-free feedback short-circuits to ``C_K``.
    """
    r = check_feasible(cfg, r)
    if cfg.K == 1:
        return _d_unchecked(cfg, r, 1.0)
    if cfg.perfect_feedback:
        return c_sequence(cfg, r, cfg.K)[cfg.K]
    cbar = cbar_sequence(cfg, r, cfg.K)
    # Cbar_1 == C_1 always
    return min(cbar[cfg.K], cfg.y + cbar[1])


def cut_index(cfg: SystemConfig, r) -> int:
    """Largest ``j`` with ``C_j(r) <= mn`` (ties count as ``<=``)."""
    r = check_feasible(cfg, r)
    mn = cfg.mn
    c = 0.0
    j = 0
    while True:
        nxt = _d_unchecked(cfg, r, 1.0 + c)
        if nxt > mn + TOL:
            return j
        if nxt <= c:
            # C_j is strictly increasing for feasible r; guards against a
            # zero exponent looping forever
            raise ArithmeticError(f"C recursion stalled at j={j} for r={r.r}")
        c = nxt
        j += 1


def _cut(cfg, r, j):
    if cfg.perfect_feedback or abs(cfg.y - cfg.mn) > TOL:
        raise ValueError(f"piecewise form needs y == mn == {cfg.mn}, got y={cfg.y}")
    if j < 1:
        raise ValueError("j must be >= 1")
    r = check_feasible(cfg, r)
    k = cut_index(cfg, r)
    c = c_sequence(cfg, r, min(j, k + 1))
    if j <= k:
        return c[j], "j<=k"
    if j == k + 1:
        return min(c[j], cfg.mn + c[1]), "j=k+1"
    return cfg.mn + c[1], "j>k+1"


def d_opt_piecewise_ymn(cfg: SystemConfig, r, j: int) -> float:
    """Three-branch form of ``d_opt`` with ``j`` indices, valid when ``y == mn``.

    With ``k`` the last index whose ``C_k(r) <= mn``: ``C_j`` up to ``k``,
    ``min(C_{k+1}, mn + C_1)`` at ``k + 1``, and ``mn + C_1`` after that.
    """
    return _cut(cfg, r, j)[0]


def cut_branch(cfg: SystemConfig, r, j: int) -> str:
    """Branch of the three-branch form: ``"j<=k"``, ``"j=k+1"`` or ``"j>k+1"``."""
    return _cut(cfg, r, j)[1]


def branch_label(cfg: SystemConfig, r) -> str:
    """Which term of the achievable tradeoff is active at ``r``."""
    if cfg.K == 1:
        return "no_feedback"
    if not cfg.perfect_feedback and abs(cfg.y - cfg.mn) <= TOL:
        return cut_branch(cfg, r, cfg.K)
    if cfg.perfect_feedback:
        return "recursion"
    cbar = cbar_sequence(cfg, r, cfg.K)
    return "recursion" if cbar[cfg.K] <= cfg.y + cbar[1] + TOL else "error_floor"


# -- curves -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepAxis:
    """Sweep user ``index`` (0-based); other users stay at ``base``."""

    index: int
    base: tuple

    def point(self, value: float) -> MultiplexPoint:
        r = list(self.base)
        r[self.index] = value
        return MultiplexPoint(tuple(r))

    def describe(self) -> str:
        fixed = ", ".join(
            f"r{i + 1}={v:g}" for i, v in enumerate(self.base) if i != self.index
        )
        return f"r{self.index + 1}" + (f" ({fixed})" if fixed else "")


@dataclass
class DmtCurve:
    config: SystemConfig
    axis: SweepAxis
    samples: list = field(default_factory=list)  # (r_swept, d, branch)
    breakpoints: list = field(default_factory=list)

    @property
    def r(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def d(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])


def sweep_limit(cfg: SystemConfig, axis: SweepAxis) -> float:
    """Supremum of the swept coordinate keeping every subset feasible."""
    if not 0 <= axis.index < cfg.L or len(axis.base) != cfg.L:
        raise ValueError("sweep index / base vector do not match the user count")
    upper = math.inf
    for S in subsets(cfg.L):
        limit = min(len(S) * cfg.m, cfg.n)
        rest = sum(axis.base[i] for i in S if i != axis.index)
        if axis.index in S:
            upper = min(upper, limit - rest)
        elif not rest < limit:
            raise InfeasibleRateError(S, rest, limit)
    if not upper > 0:
        raise ValueError(f"empty feasible range for {axis.describe()}")
    return upper


def sample_curve(cfg: SystemConfig, axis: SweepAxis, resolution: int = 300) -> DmtCurve:
    """Sample ``d_opt`` along ``axis`` on ``[0, u)`` and locate its kinks.

    The grid is ``u * i / resolution`` for ``i < resolution``, so it starts at
    ``r = 0`` and stops one step inside the boundary ``u``.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    upper = sweep_limit(cfg, axis)

    def f(t):
        return d_opt(cfg, axis.point(t))

    grid = upper * np.arange(resolution) / resolution
    d = np.array([f(t) for t in grid])
    curve = DmtCurve(cfg, axis)
    curve.samples = [
        (float(t), float(v), branch_label(cfg, axis.point(t))) for t, v in zip(grid, d)
    ]
    curve.breakpoints = _kinks(f, grid, d)
    return curve


def _kinks(f, x, y, depth=0):
    """Kink locations of a piecewise-linear ``f`` sampled at ``x``."""
    slopes = np.diff(y) / np.diff(x)
    scale = max(1.0, float(np.max(np.abs(slopes))))
    same = np.abs(np.diff(slopes)) <= 1e-7 * scale
    out = []
    i = 0
    nseg = len(slopes)
    while i < nseg - 1:
        if same[i]:
            i += 1
            continue
        # segment i ends a linear run; find where the next run starts
        j = i + 1
        while j < nseg - 1 and not same[j]:
            j += 1
        if j == i + 1:
            # kink sits on the shared grid point
            out.append(float(x[i + 1]))
        else:
            out.extend(_resolve(f, x, y, slopes, i, j, depth))
        i = j
    return sorted(set(round(v, 12) for v in out))


def _resolve(f, x, y, slopes, i, j, depth):
    # lines through segment i and segment j
    s1, s2 = slopes[i], slopes[j]
    if abs(s1 - s2) > 1e-12:
        xs = (y[j] - y[i] + s1 * x[i] - s2 * x[j]) / (s1 - s2)
        if x[i + 1] <= xs <= x[j] and abs(f(xs) - (y[i] + s1 * (xs - x[i]))) < 1e-9:
            # one kink, unless the span hides several
            probe = np.linspace(x[i + 1], x[j], 9)
            line = np.where(probe <= xs, y[i] + s1 * (probe - x[i]), y[j] + s2 * (probe - x[j]))
            if np.allclose([f(t) for t in probe], line, atol=1e-9):
                return [float(xs)]
    if depth >= 6:
        return [float(0.5 * (x[i + 1] + x[j]))]
    fine = np.linspace(x[i], x[j + 1], 4 * (j - i + 1) + 1)
    return _kinks(f, fine, np.array([f(t) for t in fine]), depth + 1)


# -- closed forms -----------------------------------------------------------


@dataclass
class IdentityCheck:
    name: str
    m: int
    n: int
    K: int
    expected: float | None
    computed: float | None
    status: str  # "pass" | "fail" | "skipped"

    @property
    def diff(self):
        if self.expected is None or self.computed is None:
            return None
        return self.computed - self.expected

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def c_closed_form(mn: int, K: int) -> float:
    """``C_K(0) = mn((mn)^K - 1)/(mn - 1)``, which is ``K`` when ``mn = 1``."""
    if mn == 1:
        return float(K)
    return mn * (mn**K - 1) / (mn - 1)


def cbar_closed_form(mn: int, K: int) -> float:
    """``Cbar_K(0)`` for ``y = mn``."""
    return float(mn) if K == 1 else float(mn * (1 + mn))


def verify_closed_forms(cfg: SystemConfig) -> list[IdentityCheck]:
    """Evaluate the recursions at ``r = 0`` with ``y = mn`` and compare with
    the closed forms for ``C_K``, ``Cbar_K`` and the doubled diversity."""
    mn = cfg.mn
    sym = cfg.with_(y=float(mn))
    zero = MultiplexPoint.zeros(cfg.L)
    checks = []

    def add(name, expected, computed):
        ok = abs(computed - expected) <= TOL * max(1.0, abs(expected))
        checks.append(IdentityCheck(name, cfg.m, cfg.n, cfg.K, expected, computed,
                                    "pass" if ok else "fail"))

    add("C_K(0)", c_closed_form(mn, cfg.K), c_recursion(sym, zero, cfg.K))
    add("Cbar_K(0)", cbar_closed_form(mn, cfg.K), cbar_recursion(sym, zero, cfg.K))
    if cfg.K == 1:
        add("d_opt(0)=mn", float(mn), d_opt(sym, zero))
        checks.append(IdentityCheck("d_opt(0)=2mn", cfg.m, cfg.n, cfg.K, None, None, "skipped"))
    else:
        add("d_opt(0)=2mn", float(2 * mn), d_opt(sym, zero))
    return checks


def hel_holds(cfg: SystemConfig, r) -> bool:
    """``D(r, 1 + mn) >= mn + D(r, 1)``."""
    mn = cfg.mn
    return d_exponent(cfg, r, 1.0 + mn) >= mn + d_exponent(cfg, r, 1.0) - TOL


def feasible_grid(cfg: SystemConfig, count: int, rng=None) -> list[MultiplexPoint]:
    """``count`` feasible multiplexing vectors: a regular grid for one user,
    rejection-sampled uniform points otherwise."""
    if cfg.L == 1:
        top = min(cfg.m, cfg.n)
        return [MultiplexPoint((top * i / count,)) for i in range(count)]
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    top = min(cfg.m, cfg.n)
    while len(out) < count:
        cand = rng.uniform(0, top, size=cfg.L)
        try:
            out.append(check_feasible(cfg, cand))
        except InfeasibleRateError:
            continue
    return out


__all__ = [
    "InfeasibleRateError", "SystemConfig", "MultiplexPoint", "SweepAxis", "DmtCurve",
    "IdentityCheck", "check_feasible", "g_exponent", "d_exponent", "c_recursion",
    "cbar_recursion", "c_sequence", "cbar_sequence", "d_opt", "d_opt_piecewise_ymn",
    "cut_index", "cut_branch", "branch_label", "sample_curve", "sweep_limit", "verify_closed_forms",
    "c_closed_form", "cbar_closed_form", "hel_holds", "feasible_grid", "subsets",
]
