"""Decay rates and sample-path bounds for general reversible Markov fluids.

The decay rate gamma of a fluid source with generator Q, rates r, and
allocated capacity C solves the generalized eigenproblem

    Q h = -gamma * diag(u) h,     u_j = r_j - C,

taken at the eigenvalue -gamma with the largest negative real part that
carries a strictly positive eigenvector.  The two-flow bound couples two
such solutions through a double infimum over the capacity split C1 + C2 = C
and a common decay gamma <= min(gamma_1, gamma_2); eigenvector entries enter
with exponents gamma/gamma_k (the power that turns each exponential
supermartingale into one with common decay).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateSourceError,
    EigenvectorError,
    InvalidParamsError,
    NoFeasibleSplitError,
    TrivialScenarioError,
    UnstableScenarioError,
    ZeroDriftError,
)
from .martingale import martingale_constants
from .traffic import MarkovFluidSource, Scenario, aggregate_source

__all__ = [
    "GeneralizedDecay",
    "GridConfig",
    "GeneralBoundResult",
    "generalized_decay",
    "fluid_effective_bandwidth",
    "single_flow_fluid_bound",
    "general_sample_path_bound",
    "mmoo_consistency_check",
]

_RESIDUAL_TOL = 1e-10
_SIGN_TOL = 1e-9


@dataclass(frozen=True)
class GeneralizedDecay:
    """Decay rate, positive eigenvector (min entry 1), and per-state drifts."""

    gamma: float
    eigenvector: np.ndarray
    drifts: np.ndarray


def _decay_from_drifts(q: np.ndarray, u: np.ndarray) -> GeneralizedDecay:
    m = -np.diag(1.0 / u) @ q
    vals, vecs = np.linalg.eig(m)
    scale = max(1.0, float(np.abs(vals).max()))
    order = np.argsort(vals.real)
    for i in order:
        if vals[i].real <= 1e-12 * scale or abs(vals[i].imag) > _SIGN_TOL * scale:
            continue
        v = vecs[:, i]
        pivot = v[np.argmax(np.abs(v))]
        v = (v * np.conj(pivot / abs(pivot))).real
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        if v.min() <= _SIGN_TOL * v.max():
            continue  # not sign-consistent
        gamma = float(vals[i].real)
        h = v / v.min()
        residual = float(np.abs(q @ h + gamma * u * h).max())
        if residual <= _RESIDUAL_TOL * float(np.abs(h).max()):
            return GeneralizedDecay(gamma, h, u.copy())
    raise EigenvectorError(
        "no positive generalized eigenvector with the required residual; "
        "numerical failure or invalid source"
    )


def generalized_decay(src: MarkovFluidSource, allocated_capacity: float) -> GeneralizedDecay:
    """Solve the generalized eigenproblem for one source at its allocated capacity.

    Requires stability (mean rate < capacity) and a non-degenerate source.
    A state whose rate equals the capacity makes diag(u) singular; the
    capacity is then perturbed by 1e-9*C and the solve retried once,
    downward by preference so the crossing state stays in the drift-
    nonnegative set (the continuous limit of the bound).
    """
    if src.n_states < 2:
        raise DegenerateSourceError(
            "constant-rate (single-state) source has no eigenstructure"
        )
    c = float(allocated_capacity)
    if not src.mean_rate < c:
        raise UnstableScenarioError(
            f"mean rate {src.mean_rate:.6g} >= allocated capacity {c:.6g}"
        )
    if c >= src.rates.max():
        raise TrivialScenarioError(
            f"allocated capacity {c:.6g} at or above the peak rate "
            f"{src.rates.max():.6g}: the queue never builds"
        )
    rate_scale = max(c, float(np.abs(src.rates).max()))
    u = src.rates - c
    if np.abs(u).min() <= 1e-12 * rate_scale:
        # Prefer the downward perturbation: it keeps the zero-drift state in
        # the crossing set, the continuous limit of the bound.  Fall back to
        # upward if the stability margin is thinner than the perturbation.
        c_pert = c * (1.0 - 1e-9)
        if not src.mean_rate < c_pert:
            c_pert = c * (1.0 + 1e-9)
        u = src.rates - c_pert
        if np.abs(u).min() <= 1e-12 * rate_scale:
            raise ZeroDriftError(
                "a state rate equals the allocated capacity even after perturbation"
            )
    return _decay_from_drifts(src.generator, u)


def fluid_effective_bandwidth(theta: float, src: MarkovFluidSource) -> float:
    """alpha_theta = zeta_theta/theta, zeta the largest-real eigenvalue of Q + theta*diag(r)."""
    if not theta > 0:
        raise InvalidParamsError(f"theta must be > 0, got {theta}")
    m = src.generator + theta * np.diag(src.rates)
    zeta = float(np.linalg.eigvals(m).real.max())
    return zeta / theta


def single_flow_fluid_bound(src: MarkovFluidSource, capacity: float, sigma: float,
                            variant: str = "constrained") -> float:
    """Steady-state bound P(Q > sigma) <= prefactor * exp(-gamma*sigma).

    ``constrained`` takes the denominator min over drift-nonnegative states
    (the states reachable at the crossing), ``legacy`` over all states; the
    constrained bound is never larger.
    """
    if variant not in ("constrained", "legacy"):
        raise InvalidParamsError(f"variant must be constrained|legacy, got {variant!r}")
    gd = generalized_decay(src, capacity)
    num = float(src.stationary @ gd.eigenvector)
    if variant == "constrained":
        den = float(gd.eigenvector[gd.drifts >= 0].min())
    else:
        den = float(gd.eigenvector.min())
    return num / den * math.exp(-gd.gamma * sigma)


@dataclass(frozen=True)
class GridConfig:
    """Resolution of the double infimum; explicit values override the counts."""

    c1_points: int = 64
    gamma_points: int = 64
    c1_values: Optional[np.ndarray] = None
    gamma_values: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GeneralBoundResult:
    value: float
    gamma: float
    c1: float


def _k_factor(gd1: GeneralizedDecay, gd2: GeneralizedDecay,
              pi1: np.ndarray, pi2: np.ndarray, gamma: float) -> float:
    e1 = gd1.eigenvector ** (gamma / gd1.gamma)
    e2 = gd2.eigenvector ** (gamma / gd2.gamma)
    num = float(pi1 @ e1) * float(pi2 @ e2)
    feasible = gd1.drifts[:, None] + gd2.drifts[None, :] >= 0
    den = float((e1[:, None] * e2[None, :])[feasible].min())
    return num / den


def general_sample_path_bound(src1: MarkovFluidSource,
                              src2: Optional[MarkovFluidSource],
                              capacity: float, u: float, sigma: float,
                              grid: GridConfig = GridConfig()) -> GeneralBoundResult:
    """Double infimum over capacity splits and the common decay rate.

    ``src2=None`` (or an all-silent source) removes the cross flow: the split
    degenerates to C1 = C and the bound reduces to the single-flow machinery
    with the remaining infimum over gamma in [0, gamma_1].
    """
    if u < 0:
        raise InvalidParamsError(f"u must be >= 0, got {u}")
    if src2 is not None and not src2.rates.any():
        src2 = None

    best = GeneralBoundResult(math.inf, math.nan, math.nan)

    def consider(gd1: GeneralizedDecay, gd2: Optional[GeneralizedDecay],
                 pi1, pi2, c1: float):
        nonlocal best
        gmax = gd1.gamma if gd2 is None else min(gd1.gamma, gd2.gamma)
        if grid.gamma_values is not None:
            gammas = np.asarray(grid.gamma_values, dtype=float)
            # keep points equal to gmax up to rounding of the eigen solve
            gammas = gammas[(gammas >= 0) & (gammas <= gmax * (1 + 1e-9))]
            gammas = np.minimum(gammas, gmax)
        else:
            gammas = np.linspace(0.0, gmax, grid.gamma_points)
        for g in gammas:
            if gd2 is None:
                e1 = gd1.eigenvector ** (g / gd1.gamma)
                k = float(pi1 @ e1) / float(e1[gd1.drifts >= 0].min())
            else:
                k = _k_factor(gd1, gd2, pi1, pi2, g)
            val = k * math.exp(-g * (c1 * u + sigma))
            if val < best.value:
                best = GeneralBoundResult(val, float(g), c1)

    if src2 is None:
        gd1 = generalized_decay(src1, capacity)
        consider(gd1, None, src1.stationary, None, capacity)
        return best

    m1, m2 = src1.mean_rate, src2.mean_rate
    width = capacity - m1 - m2
    if width <= 0:
        raise NoFeasibleSplitError(
            f"total mean rate {m1 + m2:.6g} >= capacity {capacity:.6g}"
        )
    if grid.c1_values is not None:
        c1_list = np.asarray(grid.c1_values, dtype=float)
    else:
        steps = np.arange(1, grid.c1_points + 1) / (grid.c1_points + 1)
        c1_list = m1 + width * steps
    usable = 0
    for c1 in c1_list:
        try:
            gd1 = generalized_decay(src1, float(c1))
            gd2 = generalized_decay(src2, float(capacity - c1))
        except (TrivialScenarioError, UnstableScenarioError, ZeroDriftError):
            continue
        usable += 1
        consider(gd1, gd2, src1.stationary, src2.stationary, float(c1))
    if not usable:
        raise NoFeasibleSplitError("no capacity split admits both eigenproblems")
    return best


def mmoo_consistency_check(scenario: Scenario) -> dict:
    """Validate the eigen machinery against the closed-form constants.

    Builds the n-fold On-count chain at total capacity C = n*c and checks
    that (a) the generalized eigenvalue reproduces the closed-form gamma and
    (b) the eigenvector has the exponential profile h_j = exp(-theta*j) whose
    stationary sum, evaluated at the fractional drift-zero crossing C/P,
    reproduces the closed-form prefactor K^n.  Also reports the directly
    computed single-flow bound prefactor, which sharpens K^n by the
    integer-crossing factor exp(theta*(ceil(C/P) - C/P)).
    """
    params = scenario.params
    n = scenario.n
    cap = scenario.capacity
    closed = martingale_constants(scenario)
    src = aggregate_source(n, params)
    gd = generalized_decay(src, cap)
    # reconstruct the capacity actually solved for (zero-drift perturbation)
    cap_eff = float(src.rates[0] - gd.drifts[0])

    h = gd.eigenvector
    theta_hats = -np.log(h[1:] / h[:-1])
    theta_hat = float(theta_hats.mean())
    theta_spread = float(np.abs(theta_hats - theta_hat).max())

    kn_closed = closed.K ** n
    kn_general = float(src.stationary @ h) * math.exp(theta_hat * cap_eff / params.peak)

    sf = single_flow_fluid_bound(src, cap, 0.0, "constrained")
    crossing = math.ceil(cap / params.peak) - cap / params.peak
    sf_predicted = kn_closed * math.exp(closed.theta * crossing)

    return {
        "n": n,
        "gamma_general": gd.gamma,
        "gamma_closed": closed.gamma,
        "gamma_abs_delta": abs(gd.gamma - closed.gamma),
        "prefactor_general": kn_general,
        "prefactor_closed": kn_closed,
        "prefactor_rel_error": abs(kn_general - kn_closed) / kn_closed,
        "theta_spread": theta_spread,
        "single_flow_prefactor": sf,
        "single_flow_predicted": sf_predicted,
        "single_flow_rel_error": abs(sf - sf_predicted) / sf_predicted,
    }
