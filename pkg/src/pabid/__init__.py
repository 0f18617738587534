"""Learning to bid in repeated multi-unit pay-as-bid auctions.

The library provides: exact hindsight optimization of a fixed bid vector by
dynamic programming, two families of no-regret online bidders (decoupled
exponential weights and online mirror descent over per-slot occupancy
measures), stochastic and worst-case environments, and a multi-agent market
simulator with regret, welfare, and revenue reporting.
"""

__version__ = "0.1.0"

from .grids import BidGrid, make_even_grid
from .auction import (
    AuctionOutcome,
    BidVector,
    CompetingBids,
    TieBreak,
    ValuationProfile,
    allocate,
    competing_bids,
    merge_settle,
    settle,
    slot_reward,
)
from .hindsight import (
    HindsightSolution,
    NodeWeightTable,
    accumulate_weights,
    accumulate_weights_history,
    brute_force_optimal,
    hindsight_optimal,
)
from .exp_weights import (
    ContextualExpWeightsBidder,
    EstimatedWeightTable,
    ExpWeightsBidder,
    FeedbackMode,
    LearnerConfig,
    PartialSumTable,
    SlotMarginals,
    Trajectory,
    bandit_update,
    compute_partial_sums,
    eta_schedule,
    full_info_update,
    ix_gamma_schedule,
    path_log_probability,
    run_ew,
    sample_bid,
    slot_marginals,
)
from .mirror_descent import (
    OccupancyMeasure,
    OmdBidder,
    Policy,
    ProjectionError,
    ProjectionResult,
    induced_marginals,
    omd_eta_schedule,
    omd_round,
    policy_sample,
    project_to_Q,
    q_membership,
    recover_policy,
    run_omd,
    unconstrained_step,
    unnormalized_kl,
)
from .adversaries import (
    CallbackAdversary,
    LowerBoundInstance,
    StochasticAdversary,
    lower_bound_instance,
)
from .simulator import (
    MarketMetrics,
    RegretReport,
    RunLog,
    SelfPlayMarket,
    market_metrics,
    regret_report,
    run_experiment,
    self_play_adapter,
)
from .scenario import Scenario, ScenarioError, canonical_hash, load_scenario, validate_scenario
