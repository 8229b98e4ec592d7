"""Experiment configuration and result records.

Config files are flat ``key = value`` text, one key per line, ``#`` comments.
Lists are comma separated; ``y = inf`` means error-free feedback.

Curve CSV columns: ``r, d, K, branch``.
Simulation CSV columns: see :data:`SIM_COLUMNS`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone

from . import __version__
from .analytic import MultiplexPoint, SystemConfig

CURVE_COLUMNS = ("r", "d", "K", "branch")
SIM_COLUMNS = (
    "snr_db", "trials", "outages", "probability", "ci_low", "ci_high", "reliable",
    "epsilon", "decomposition_bound", "levels", "level_exponents",
    "analytic_exponents", "level_outage_probs",
)


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _y(text):
    t = str(text).strip().lower()
    return math.inf if t in ("inf", "+inf", "infinity") else float(t)


def _fmt_float(v):
    return "inf" if math.isinf(v) else repr(float(v))


@dataclass
class ExperimentConfig:
    m: int = 1
    n: int = 1
    users: int = 1
    k_levels: tuple = (1,)
    y: float = math.inf
    r: tuple | None = None
    sweep: int | None = None          # 1-based user index
    snr_db: tuple = (10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 100_000
    cal_trials: int = 100_000
    seed: int = 0
    out: str | None = None
    format: str = "csv"

    _PARSERS = {
        "m": int, "n": int, "users": int, "k_levels": _ints, "y": _y, "r": _floats,
        "sweep": int, "snr_db": _floats, "trials": int, "cal_trials": int,
        "seed": int, "out": str, "format": str,
    }

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            for K in self.k_levels:
                SystemConfig(self.m, self.n, self.users, K, self.y)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.k_levels:
            raise ConfigError("k_levels must not be empty")
        if self.r is not None and len(self.r) != self.users:
            raise ConfigError(f"r has {len(self.r)} entries for {self.users} users")
        if self.sweep is not None and not 1 <= self.sweep <= self.users:
            raise ConfigError(f"sweep must be a user index in 1..{self.users}")
        if self.trials < 0 or self.cal_trials < 0:
            raise ConfigError("trial counts must be >= 0")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")

    def system(self, K: int | None = None) -> SystemConfig:
        return SystemConfig(self.m, self.n, self.users, self.k_levels[0] if K is None else K, self.y)

    def point(self) -> MultiplexPoint:
        return MultiplexPoint(self.r if self.r is not None else (0.0,) * self.users)

    # -- flat text format -----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                text = ""
            elif f.name == "y":
                text = _fmt_float(v)
            elif isinstance(v, tuple):
                text = ",".join(repr(x) for x in v)
            else:
                text = str(v)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse_text(cls, text: str) -> dict:
        """Key/value pairs of a config file, converted to field types."""
        out = {}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {num}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in cls._PARSERS:
                raise ConfigError(f"line {num}: unknown key {key!r}")
            try:
                out[key] = None if val == "" else cls._PARSERS[key](val)
            except ValueError as exc:
                raise ConfigError(f"line {num}: bad value for {key}: {exc}") from exc
        return out

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        vals = cls.parse_text(text)
        vals.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**vals)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["y"] = _fmt_float(self.y)
        return d


@dataclass
class ResultRecord:
    experiment: ExperimentConfig
    analytic: dict
    simulated: dict | None = None
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def to_json(self) -> str:
        body = {
            "tool": "dmtfb",
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
            "seed": self.experiment.seed,
            "experiment": self.experiment.to_dict(),
            "analytic": self.analytic,
            "simulated": self.simulated,
        }
        return json.dumps(body, indent=2, default=_json_default, allow_nan=True) + "\n"


def _json_default(o):
    import numpy as np

    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def curve_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for curve in curves:
        for r, d, branch in curve.samples:
            w.writerow((repr(r), repr(d), curve.config.K, branch))
    return buf.getvalue()


def _join(values):
    return ";".join(repr(float(v)) for v in values)


def simulation_csv(run) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIM_COLUMNS)
    for e in run.estimates:
        sch = e.schedule
        w.writerow((
            repr(e.snr_db), e.trials, e.outages, repr(e.probability), repr(e.ci95[0]),
            repr(e.ci95[1]), int(e.reliable), repr(e.epsilon), repr(e.bound),
            _join(sch.levels), _join(sch.exponents), _join(sch.analytic_exponents),
            _join(e.level_probabilities),
        ))
    return buf.getvalue()
