"""Experiment harness: bound-vs-simulation comparison, scaling, admission.

Bounds on the virtual delay are converted to packet-delay bounds by the Palm
prefactor 1/(1 - (1-p)^n), which conditions on an arrival at the observation
instant.  Raw (unclamped) values are kept everywhere; min(1, .) clamping for
display happens here and only here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParamsError
from .martingale import (
    SchedulerSpec,
    gps_constants,
    martingale_constants,
    martingale_delay_bound,
)
from .standard import standard_delay_bound
from .traffic import MmooParams, Scenario
from .sim import SimConfig, replicate

__all__ = [
    "ExperimentSpec",
    "AdmissionQuery",
    "palm_prefactor",
    "compare_experiment",
    "scaling_experiment",
    "admission_max_flows",
    "verify",
    "VERIFY_SUITES",
    "COMPARE_COLUMNS",
    "rows_to_csv",
]

COMPARE_COLUMNS = ("scheduler", "n1", "n2", "rho", "d",
                   "martingale_raw", "martingale_disp",
                   "standard_raw", "standard_disp", "theta_star",
                   "sim_median", "sim_q25", "sim_q75", "sim_n")


@dataclass(frozen=True)
class ExperimentSpec:
    """One bound-vs-simulation comparison run."""

    scenario: Scenario
    scheduler: SchedulerSpec
    sim: SimConfig
    palm_mode: str = "total"
    gps_exponent: str = "total"
    out: Optional[str] = None

    def __post_init__(self):
        if self.palm_mode not in ("total", "through"):
            raise InvalidParamsError(f"palm mode must be total|through, got {self.palm_mode!r}")


def palm_prefactor(scenario: Scenario, mode: str = "total") -> float:
    """Packet-delay correction 1/(1-(1-p)^n).

    ``total`` uses n = n1+n2; ``through`` uses n1, which
    matches conditioning on the through flow's own instantaneous arrivals.
    """
    p = scenario.params.on_probability
    if mode == "total":
        count = scenario.n
    elif mode == "through":
        count = scenario.n1
    else:
        raise InvalidParamsError(f"palm mode must be total|through, got {mode!r}")
    return 1.0 / (1.0 - (1.0 - p) ** count)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def rows_to_csv(rows: list[dict], columns) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def compare_experiment(spec: ExperimentSpec, n_jobs: Optional[int] = None) -> list[dict]:
    """Palm-corrected bounds next to simulated CCDF box stats, one row per d."""
    scenario, sched = spec.scenario, spec.scheduler
    palm = palm_prefactor(scenario, spec.palm_mode)
    box = replicate(scenario, sched, spec.sim, n_jobs=n_jobs)
    rows = []
    for j, d in enumerate(box.delay_grid):
        mart = palm * martingale_delay_bound(scenario, sched, d,
                                             gps_exponent=spec.gps_exponent).value
        std = standard_delay_bound(scenario, sched, d)
        std_raw = palm * std.value
        rows.append({
            "scheduler": sched.kind, "n1": scenario.n1, "n2": scenario.n2,
            "rho": scenario.rho, "d": d,
            "martingale_raw": mart, "martingale_disp": min(1.0, mart),
            "standard_raw": std_raw, "standard_disp": min(1.0, std_raw),
            "theta_star": std.theta_star,
            "sim_median": float(box.median[j]), "sim_q25": float(box.q25[j]),
            "sim_q75": float(box.q75[j]), "sim_n": box.replications,
        })
    return rows


def scaling_experiment(scenario: Scenario, n_list, d: float,
                       sched: SchedulerSpec) -> dict:
    """Bounds as the flow count scales with per-flow capacity and rho fixed.

    Splits each n evenly (n1 = n2 = n/2).  Reports the numerically fitted
    slope of log(standard/martingale) against n and the closed-form
    many-sources gap constant alpha = -log K, which the fit approaches from
    above as n grows (the standard prefactor contributes a log n term).
    """
    n_list = [int(n) for n in n_list]
    if not n_list or any(n < 2 or n % 2 for n in n_list):
        raise InvalidParamsError("flow counts must be even and >= 2")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidParamsError("flow counts must be strictly increasing")
    rows = []
    for n in n_list:
        sc = Scenario(n // 2, n // 2, scenario.per_flow_capacity, scenario.params)
        mart = martingale_delay_bound(sc, sched, d).value
        std = standard_delay_bound(sc, sched, d).value
        rows.append({"n": n, "martingale": mart, "standard": std,
                     "ratio": std / mart})
    log_ratio = np.log([r["ratio"] for r in rows])
    alpha_fit = float(np.polyfit(n_list, log_ratio, 1)[0]) if len(n_list) > 1 else math.nan
    if sched.kind == "gps":
        consts = gps_constants(scenario, sched.phi1)
    else:
        consts = martingale_constants(scenario)
    return {"rows": rows, "alpha_fit": alpha_fit,
            "alpha_closed": -math.log(consts.K)}


@dataclass(frozen=True)
class AdmissionQuery:
    """Largest admissible flow count under a delay/violation target.

    Flows are added in through/cross pairs (n1 = n2 = n/2).  The chosen
    bound, Palm-corrected and clamped at 1, must stay at or below epsilon.
    """

    capacity: float
    d: float
    epsilon: float
    scheduler: SchedulerSpec
    params: MmooParams
    method: str = "martingale"
    palm_mode: str = "total"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise InvalidParamsError("epsilon must lie in (0, 1]")
        if self.d < 0 or self.capacity <= 0:
            raise InvalidParamsError("need d >= 0 and capacity > 0")
        if self.method not in ("martingale", "standard"):
            raise InvalidParamsError(f"method must be martingale|standard, got {self.method!r}")


def _violation(q: AdmissionQuery, n: int) -> float:
    """Palm-corrected, clamped violation bound for n flows on capacity C."""
    c = q.capacity / n
    if q.params.peak <= c:
        return 0.0  # aggregate peak <= C: the queue never builds
    sc = Scenario(n // 2, n // 2, c, q.params)
    if q.method == "martingale":
        raw = martingale_delay_bound(sc, q.scheduler, q.d).value
    else:
        raw = standard_delay_bound(sc, q.scheduler, q.d).value
    return min(1.0, palm_prefactor(sc, q.palm_mode) * raw)


def admission_max_flows(q: AdmissionQuery) -> dict:
    """Largest even n with rho < 1 and violation bound <= epsilon.

    Returns n_max = 0 when nothing is admissible; the stability cap (largest
    even n with n*p*P < C) is always reported.
    """
    mean = q.params.mean_rate
    cap_n = 0
    n = 2
    while n * mean < q.capacity:
        cap_n = n
        n += 2
    n_max = 0
    for n in range(2, cap_n + 1, 2):
        if _violation(q, n) <= q.epsilon:
            n_max = n
    return {
        "n_max": n_max,
        "stability_cap": cap_n,
        "utilization": n_max * mean / q.capacity,
        "limited_by": "stability" if n_max == cap_n else
                      ("bound" if n_max > 0 else "none-admissible"),
    }


# ---------------------------------------------------------------------------
# named verification suites (driven by the CLI `verify` subcommand)


def _suite_theta_star() -> tuple[bool, str]:
    from .standard import solve_eb_equation

    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        lam = rng.uniform(0.05, 3.0)
        mu = rng.uniform(0.05, 3.0)
        peak = rng.uniform(0.5, 4.0)
        params = MmooParams(lam, mu, peak)
        p = params.on_probability
        rho = rng.uniform(p + 1e-3, 1 - 1e-3)
        if rho <= p:
            continue
        c = params.mean_rate / rho
        gamma = (lam + mu) * (1 - rho) / (peak - c)
        worst = max(worst, abs(solve_eb_equation(params, c) - gamma))
    return worst <= 1e-8, f"max |theta*-gamma| = {worst:.3g}"


def _suite_mmoo_consistency() -> tuple[bool, str]:
    from .general import mmoo_consistency_check

    params = MmooParams(0.5, 0.1, 1.0)
    worst_g = worst_k = 0.0
    for rho in (0.75, 0.9):
        for n in range(2, 11, 2):
            sc = Scenario.from_utilization(n // 2, n - n // 2, rho, params)
            rep = mmoo_consistency_check(sc)
            worst_g = max(worst_g, rep["gamma_abs_delta"] / rep["gamma_closed"])
            worst_k = max(worst_k, rep["prefactor_rel_error"])
    ok = worst_g <= 1e-8 and worst_k <= 1e-8
    return ok, f"gamma rel {worst_g:.3g}, prefactor rel {worst_k:.3g}"


def _suite_binomial() -> tuple[bool, str]:
    from .traffic import aggregate_generator, stationary_distribution

    params = MmooParams(0.5, 0.1, 1.0)
    p = params.on_probability
    worst = 0.0
    for n in range(1, 13):
        pi = stationary_distribution(aggregate_generator(n, params))
        ref = np.array([math.comb(n, i) * p**i * (1 - p)**(n - i) for i in range(n + 1)])
        worst = max(worst, float(np.abs(pi - ref).max()))
    return worst <= 1e-10, f"max binomial deviation {worst:.3g}"


def _suite_reductions() -> tuple[bool, str]:
    params = MmooParams(0.5, 0.1, 1.0)
    worst = 0.0
    for rho in (0.6, 0.75, 0.9):
        for d in (0.0, 1.0, 5.0, 20.0):
            sc0 = Scenario.from_utilization(6, 0, rho, params)
            fifo = martingale_delay_bound(sc0, SchedulerSpec.fifo(), d).value
            sp = martingale_delay_bound(sc0, SchedulerSpec.sp(), d).value
            worst = max(worst, abs(fifo - sp))
            sc = Scenario.from_utilization(3, 3, rho, params)
            fifo = martingale_delay_bound(sc, SchedulerSpec.fifo(), d).value
            edf = martingale_delay_bound(sc, SchedulerSpec.edf(2.0, 2.0), d).value
            worst = max(worst, abs(fifo - edf))
            f_std = standard_delay_bound(sc0, SchedulerSpec.fifo(), d).value
            s_std = standard_delay_bound(sc0, SchedulerSpec.sp(), d).value
            worst = max(worst, abs(f_std - s_std))
    return worst <= 1e-12, f"max reduction mismatch {worst:.3g}"


def _suite_ordering() -> tuple[bool, str]:
    params = MmooParams(0.5, 0.1, 1.0)
    sc = Scenario.from_utilization(5, 5, 0.75, params)
    ok = True
    for d in np.linspace(0.0, 30.0, 61):
        fifo = martingale_delay_bound(sc, SchedulerSpec.fifo(), d).value
        edf = martingale_delay_bound(sc, SchedulerSpec.edf(4.0, 1.0), d).value
        sp = martingale_delay_bound(sc, SchedulerSpec.sp(), d).value
        std = standard_delay_bound(sc, SchedulerSpec.fifo(), d).value
        ok &= fifo <= edf * (1 + 1e-12) and edf <= sp * (1 + 1e-12) and std > fifo
    return ok, "FIFO <= EDF <= SP and standard > martingale on the grid"


def _suite_alpha_gamma() -> tuple[bool, str]:
    from .general import fluid_effective_bandwidth, generalized_decay
    from .traffic import MarkovFluidSource

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(3, 7))
        up = rng.uniform(0.1, 2.0, m - 1)
        down = rng.uniform(0.1, 2.0, m - 1)
        q = np.zeros((m, m))
        for i in range(m - 1):
            q[i, i + 1] = up[i]
            q[i + 1, i] = down[i]
        np.fill_diagonal(q, -q.sum(axis=1))
        rates = np.sort(rng.uniform(0.0, 5.0, m))
        src = MarkovFluidSource(q, rates)
        lo, hi = src.mean_rate, rates.max()
        c = lo + rng.uniform(0.15, 0.85) * (hi - lo)
        gd = generalized_decay(src, c)
        alpha = fluid_effective_bandwidth(gd.gamma, src)
        worst = max(worst, abs(alpha - c) / c)
    return worst <= 1e-6, f"max |alpha_gamma - C|/C = {worst:.3g}"


def _suite_martingale_mc() -> tuple[bool, str]:
    from .sim import martingale_mc_estimate

    sc = Scenario.from_utilization(5, 5, 0.75, MmooParams(0.5, 0.1, 1.0))
    fails = []
    for t in (1.0, 5.0, 20.0):
        est = martingale_mc_estimate(sc, t, 30_000, seed=(99, int(t)))
        if abs(est["mean"] - 1.0) > 3 * est["stderr"]:
            fails.append(f"t={t}: {est['mean']:.4f}+-{est['stderr']:.4f}")
    return not fails, "; ".join(fails) if fails else "E[M_t]=1 within 3 sigma"


def _suite_optimizer() -> tuple[bool, str]:
    from .standard import effective_bandwidth_rate

    params = MmooParams(0.5, 0.1, 1.0)
    sc = Scenario.from_utilization(5, 5, 0.75, params)
    gamma = martingale_constants(sc).gamma
    worst = 0.0
    for d in (0.0, 2.0, 10.0):
        res = standard_delay_bound(sc, SchedulerSpec.fifo(), d)
        th = np.geomspace(1e-9 * gamma, gamma * (1 - 1e-9), 10_000)
        r = effective_bandwidth_rate(th, params)
        grid_vals = sc.per_flow_capacity * math.e / (sc.per_flow_capacity - r) \
            * np.exp(-th * sc.capacity * d)
        worst = max(worst, res.value / float(grid_vals.min()) - 1.0)
    return worst <= 1e-9, f"max excess over 10^4-point grid {worst:.3g}"


VERIFY_SUITES = {
    "theta-star-equals-gamma": _suite_theta_star,
    "mmoo-consistency": _suite_mmoo_consistency,
    "binomial-stationarity": _suite_binomial,
    "reductions": _suite_reductions,
    "bound-ordering": _suite_ordering,
    "alpha-gamma-lemma": _suite_alpha_gamma,
    "martingale-mc": _suite_martingale_mc,
    "optimizer-grid": _suite_optimizer,
}


def verify(suite: str) -> list[tuple[str, bool, str]]:
    """Run one named property suite, or all of them."""
    if suite == "all":
        names = list(VERIFY_SUITES)
    elif suite in VERIFY_SUITES:
        names = [suite]
    else:
        raise InvalidParamsError(
            f"unknown suite {suite!r}; choose from {', '.join(VERIFY_SUITES)} or 'all'"
        )
    results = []
    for name in names:
        passed, detail = VERIFY_SUITES[name]()
        results.append((name, passed, detail))
    return results
