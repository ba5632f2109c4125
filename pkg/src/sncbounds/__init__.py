"""Delay-violation bounds for Markov-modulated On-Off traffic.

Computes sharp martingale-based and classical (union/Chernoff) per-flow delay
bounds under FIFO, SP, EDF, and GPS scheduling, generalizes the decay-rate
machinery to arbitrary reversible Markov fluids, and validates everything
against an embedded packet-level scheduler simulator.
"""

from .errors import (
    DegenerateSourceError,
    EigenvectorError,
    GpsInfeasibleError,
    InvalidParamsError,
    NoFeasibleSplitError,
    NonReversibleError,
    ReducibleChainError,
    TrivialScenarioError,
    UnstableScenarioError,
    ZeroDriftError,
)
from .traffic import (
    MarkovFluidSource,
    MmooParams,
    PacketArrival,
    Scenario,
    StatePath,
    aggregate_generator,
    aggregate_source,
    mmoo_derived,
    packetize,
    sample_path,
    stationary_distribution,
)
from .martingale import (
    DelayBound,
    MartingaleConstants,
    SchedulerSpec,
    gps_constants,
    martingale_constants,
    martingale_decay_rate,
    martingale_delay_bound,
    martingale_sample_path_bound,
)
from .standard import (
    EffectiveBandwidthEval,
    StandardBoundResult,
    effective_bandwidth,
    effective_bandwidth_rate,
    solve_eb_equation,
    standard_delay_bound,
    standard_sample_path_bound,
)
from .general import (
    GeneralBoundResult,
    GeneralizedDecay,
    GridConfig,
    fluid_effective_bandwidth,
    general_sample_path_bound,
    generalized_decay,
    mmoo_consistency_check,
    single_flow_fluid_bound,
)
from .sim import (
    BoxStats,
    DelayStats,
    SimConfig,
    martingale_mc_estimate,
    replicate,
    simulate,
)
from .analysis import (
    AdmissionQuery,
    ExperimentSpec,
    admission_max_flows,
    compare_experiment,
    palm_prefactor,
    scaling_experiment,
    verify,
)

__version__ = "0.1.0"
