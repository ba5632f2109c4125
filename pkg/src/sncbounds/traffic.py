"""Markov-modulated On-Off sources and general reversible Markov fluids.

Rates are in bits per unit time; a packet is one bit unless it is the
fractional remainder of an On-dwell.  All sampling is driven by numpy
Generators derived from ``numpy.random.SeedSequence(master, spawn_key=key)``,
so replication ``k`` of any experiment is a pure function of
``(master_seed, k)`` and independent replications can run in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
import numpy as np

from .errors import (
    InvalidParamsError,
    NonReversibleError,
    ReducibleChainError,
    TrivialScenarioError,
    UnstableScenarioError,
)

__all__ = [
    "MmooParams",
    "Scenario",
    "MarkovFluidSource",
    "StatePath",
    "PacketArrival",
    "mmoo_derived",
    "aggregate_generator",
    "aggregate_source",
    "stationary_distribution",
    "sample_path",
    "packetize",
    "packet_arrays",
    "spawned_rng",
]


def spawned_rng(master_seed, *key: int) -> np.random.Generator:
    """Generator for stream ``key`` of ``master_seed`` (splittable contract)."""
    if isinstance(master_seed, np.random.Generator):
        return master_seed
    if isinstance(master_seed, np.random.SeedSequence):
        ss = master_seed
    else:
        ss = np.random.SeedSequence(master_seed)
    if key:
        ss = np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + tuple(key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class MmooParams:
    """One On-Off source: Off->On rate ``mu``, On->Off rate ``lam``, peak rate ``peak``."""

    lam: float
    mu: float
    peak: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0 and self.peak > 0):
            raise InvalidParamsError(
                f"rates must be positive, got lam={self.lam} mu={self.mu} peak={self.peak}"
            )

    @property
    def on_probability(self) -> float:
        return self.mu / (self.lam + self.mu)

    @property
    def mean_rate(self) -> float:
        return self.on_probability * self.peak

    def as_fluid_source(self) -> "MarkovFluidSource":
        """Two-state fluid view: state 0 silent, state 1 emitting at ``peak``."""
        q = np.array([[-self.mu, self.mu], [self.lam, -self.lam]])
        return MarkovFluidSource(q, np.array([0.0, self.peak]))

    def to_json_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "peak": self.peak}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MmooParams":
        return cls(lam=d["lambda"], mu=d["mu"], peak=d["peak"])


def mmoo_derived(params: MmooParams) -> dict:
    """Steady-state On probability and mean rate of a single source."""
    return {"p": params.on_probability, "mean_rate": params.mean_rate}


@dataclass(frozen=True)
class Scenario:
    """Through/cross flow counts and per-flow capacity sharing one server.

    The server rate is ``C = (n1+n2)*c``.  Stability (``rho < 1``) is always
    required.  ``peak <= c`` means the aggregate can never backlog the server
    (zero delay); such scenarios are rejected unless ``allow_trivial`` is set,
    which the simulator uses for its no-queueing edge cases.
    """

    n1: int
    n2: int
    per_flow_capacity: float
    params: MmooParams
    allow_trivial: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 0:
            raise InvalidParamsError(f"need n1 >= 1 and n2 >= 0, got {self.n1}, {self.n2}")
        if self.per_flow_capacity <= 0:
            raise InvalidParamsError("per-flow capacity must be positive")
        if self.rho >= 1.0:
            raise UnstableScenarioError(
                f"utilization rho={self.rho:.6g} >= 1; no steady state"
            )
        if self.params.peak <= self.per_flow_capacity and not self.allow_trivial:
            raise TrivialScenarioError(
                f"peak {self.params.peak} <= per-flow capacity "
                f"{self.per_flow_capacity}: delay is identically zero"
            )

    @classmethod
    def from_utilization(cls, n1: int, n2: int, rho: float, params: MmooParams,
                         allow_trivial: bool = False) -> "Scenario":
        if not 0 < rho < 1:
            raise UnstableScenarioError(f"rho must lie in (0,1), got {rho}")
        return cls(n1, n2, params.mean_rate / rho, params, allow_trivial)

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def capacity(self) -> float:
        return self.n * self.per_flow_capacity

    @property
    def through_capacity(self) -> float:
        return self.n1 * self.per_flow_capacity

    @property
    def cross_capacity(self) -> float:
        return self.n2 * self.per_flow_capacity

    @property
    def rho(self) -> float:
        return self.params.mean_rate / self.per_flow_capacity

    def to_json_dict(self) -> dict:
        d = self.params.to_json_dict()
        d.update({"n1": self.n1, "n2": self.n2,
                  "per_flow_capacity": self.per_flow_capacity})
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "Scenario":
        params = MmooParams.from_json_dict(d)
        if "per_flow_capacity" in d:
            return cls(d["n1"], d["n2"], d["per_flow_capacity"], params)
        return cls.from_utilization(d["n1"], d["n2"], d["rho"], params)


def aggregate_generator(n: int, params: MmooParams) -> np.ndarray:
    """Birth-death generator of the On-count chain for n multiplexed sources.

    State i means i sources are On; up-rate (n-i)*mu, down-rate i*lam.
    """
    if n < 1:
        raise InvalidParamsError(f"need n >= 1, got {n}")
    q = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        if i < n:
            q[i, i + 1] = (n - i) * params.mu
        if i > 0:
            q[i, i - 1] = i * params.lam
        q[i, i] = -q[i].sum()
    return q


def stationary_distribution(q: np.ndarray) -> np.ndarray:
    """Solve pi Q = 0, sum(pi) = 1 by a dense solve.

    One balance equation is replaced by the normalization row; adequate for
    the few-hundred-state chains used here.
    """
    q = np.asarray(q, dtype=float)
    m = q.shape[0]
    if q.shape != (m, m):
        raise InvalidParamsError(f"generator must be square, got {q.shape}")
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ReducibleChainError(f"singular generator: {exc}") from exc
    scale = max(1.0, float(np.abs(q).max()))
    residual = float(np.abs(pi @ q).max())
    if residual > 1e-12 * scale or pi.min() <= 0:
        raise ReducibleChainError(
            f"no strictly positive stationary vector (residual={residual:.3g}, "
            f"min={pi.min():.3g}); chain is likely reducible"
        )
    return pi


@dataclass(frozen=True)
class MarkovFluidSource:
    """Reversible Markov fluid: generator ``q``, per-state rates, cached stationary law.

    Non-reversible chains are rejected; the analysis relies on time reversal.
    """

    generator: np.ndarray
    rates: np.ndarray
    stationary: np.ndarray = field(init=False, compare=False)

    def __post_init__(self):
        q = np.array(self.generator, dtype=float)
        r = np.array(self.rates, dtype=float)
        m = q.shape[0]
        if q.shape != (m, m) or r.shape != (m,):
            raise InvalidParamsError(
                f"generator {q.shape} and rates {r.shape} are inconsistent"
            )
        scale = max(1.0, float(np.abs(q).max()))
        off = q - np.diag(np.diag(q))
        if off.min() < -1e-12 * scale:
            raise InvalidParamsError("off-diagonal generator entries must be >= 0")
        if np.abs(q.sum(axis=1)).max() > 1e-9 * scale:
            raise InvalidParamsError("generator rows must sum to zero")
        if r.min() < 0:
            raise InvalidParamsError("arrival rates must be >= 0")
        pi = stationary_distribution(q)
        flux = pi[:, None] * q
        if np.abs(flux - flux.T).max() > 1e-9 * scale:
            raise NonReversibleError(
                "chain violates detailed balance; only reversible modulating "
                "chains are supported"
            )
        for arr in (q, r, pi):
            arr.flags.writeable = False
        object.__setattr__(self, "generator", q)
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "stationary", pi)

    @property
    def n_states(self) -> int:
        return self.generator.shape[0]

    @property
    def mean_rate(self) -> float:
        return float(self.stationary @ self.rates)

    def to_json_dict(self) -> dict:
        return {"generator": self.generator.tolist(), "rates": self.rates.tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MarkovFluidSource":
        return cls(np.array(d["generator"]), np.array(d["rates"]))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, s: str) -> "MarkovFluidSource":
        return cls.from_json_dict(json.loads(s))


def aggregate_source(n: int, params: MmooParams) -> MarkovFluidSource:
    """Fluid view of n multiplexed sources: On-count chain, state i emits i*peak."""
    q = aggregate_generator(n, params)
    return MarkovFluidSource(q, params.peak * np.arange(n + 1, dtype=float))


@dataclass(frozen=True)
class StatePath:
    """Piecewise-constant trajectory of a modulating chain over a finite horizon."""

    states: np.ndarray
    durations: np.ndarray
    horizon: float

    @property
    def segments(self) -> list[tuple[int, float]]:
        return list(zip(self.states.tolist(), self.durations.tolist()))

    def time_in_state(self, state: int) -> float:
        return float(self.durations[self.states == state].sum())


def sample_path(source: MarkovFluidSource, horizon: float, seed) -> StatePath:
    """Simulate the chain in its steady state over [0, horizon].

    Initial state is drawn from the stationary law; dwell in state i is
    exponential with rate -q[i,i]; the next state is chosen proportional to
    the off-diagonal row.  Memorylessness makes residual-time handling
    unnecessary.  The final dwell is truncated at the horizon.
    """
    if not horizon > 0:
        raise InvalidParamsError(f"horizon must be > 0, got {horizon}")
    rng = spawned_rng(seed)
    q = source.generator
    m = source.n_states
    exit_rates = -np.diag(q)
    # per-state jump distributions, precomputed once
    jump_p = []
    for i in range(m):
        if exit_rates[i] > 0:
            row = q[i] * (np.arange(m) != i)
            jump_p.append(row / row.sum())
        else:
            jump_p.append(None)
    state = int(rng.choice(m, p=source.stationary))
    states, durations = [], []
    t = 0.0
    while t < horizon:
        if exit_rates[state] <= 0:  # absorbing (single-state chain)
            states.append(state)
            durations.append(horizon - t)
            break
        dwell = rng.exponential(1.0 / exit_rates[state])
        dwell = min(dwell, horizon - t)
        states.append(state)
        durations.append(dwell)
        t += dwell
        if t >= horizon:
            break
        state = int(rng.choice(m, p=jump_p[state]))
    return StatePath(np.array(states, dtype=np.int64), np.array(durations), horizon)


@dataclass(frozen=True)
class PacketArrival:
    """One packet: timestamped when its last bit arrives; size in (0, 1]."""

    time: float
    size: float
    flow: str = "through"
    subflow: int = 0


def packet_arrays(path: StatePath, peak: float) -> tuple[np.ndarray, np.ndarray]:
    """Packetized arrivals of a binary On/Off path as (times, sizes) arrays.

    An On-dwell of length tau at rate P emits floor(P*tau) unit packets, the
    k-th timestamped at dwell start + k/P, plus one fractional packet of size
    P*tau - floor(P*tau) at the dwell end.  Total bits equal the fluid volume.
    """
    if path.states.size and path.states.max() > 1:
        raise InvalidParamsError("packetize expects a binary On/Off path")
    on = path.states == 1
    starts = np.concatenate(([0.0], np.cumsum(path.durations)[:-1]))[on]
    durs = path.durations[on]
    counts = np.floor(peak * durs).astype(np.int64)
    frac = peak * durs - counts
    total = int(counts.sum())
    cum = np.cumsum(counts) - counts  # exclusive prefix sum
    k = np.arange(total) - np.repeat(cum, counts) + 1
    unit_t = np.repeat(starts, counts) + k / peak
    keep = frac > 0
    # a fractional packet whose float timestamp collides with the last unit
    # packet would break strict ordering; drop it (volume error ~ ulp)
    last_unit = np.where(counts > 0, starts + counts / peak, -np.inf)
    keep &= (starts + durs) > last_unit
    times = np.concatenate([unit_t, (starts + durs)[keep]])
    sizes = np.concatenate([np.ones(total), frac[keep]])
    order = np.argsort(times, kind="stable")
    return times[order], sizes[order]


def packetize(path: StatePath, peak: float, flow: str = "through",
              subflow: int = 0) -> list[PacketArrival]:
    """Packetized arrivals of a binary On/Off path as PacketArrival records."""
    times, sizes = packet_arrays(path, peak)
    return [PacketArrival(float(t), float(s), flow, subflow)
            for t, s in zip(times, sizes)]
