"""Online mirror descent over per-slot bid occupancy measures.

Sampling a monotone bid vector induces one probability vector per slot; the
set of per-slot marginal tables realizable this way is cut out by per-layer
simplex constraints plus stochastic dominance between consecutive layers
(deeper slots bid lower). Expected utility is linear in the marginals, so
online linear optimization applies directly: multiply by exponentiated
reward estimates, project back onto the polytope in unnormalized KL, and
convert the marginals to a sampling policy by a greedy monotone transport.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from ._kernels import project_dual_ascent
from .auction import CompetingBids, BidVector, TieBreak, ValuationProfile, trusted_bid
from .exp_weights import FeedbackMode, ix_gamma_schedule
from .grids import BidGrid

# Floor applied to marginals before dividing in the bandit reward estimate.
Q_FLOOR = 1e-12

DEFAULT_PROJECTION_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 200_000


@dataclass(frozen=True)
class OccupancyMeasure:
    """Per-slot probability vectors over the bid grid (rows index slots)."""

    probs: np.ndarray

    @property
    def demand(self) -> int:
        return int(self.probs.shape[0])


@dataclass(frozen=True)
class Policy:
    """Sampling policy: initial slot-1 distribution plus per-transition rows.

    transitions[m][b] is the distribution of slot m+2's bid given slot m+1
    bid index b; its support never exceeds index b.
    """

    initial: np.ndarray
    transitions: np.ndarray  # shape (M-1, D, D)


@dataclass(frozen=True)
class Violation:
    kind: str  # "row_sum" | "dominance" | "negative"
    layer: int
    index: int
    magnitude: float


@dataclass(frozen=True)
class ProjectionResult:
    measure: OccupancyMeasure
    gap: float
    sweeps: int


class ProjectionError(RuntimeError):
    def __init__(self, message: str, best: OccupancyMeasure, gap: float):
        super().__init__(message)
        self.best = best
        self.gap = gap


def q_membership(q: np.ndarray, tol: float = 1e-8) -> list[Violation]:
    """All simplex / dominance / nonnegativity violations; empty means member."""
    q = np.asarray(q, dtype=float)
    m_units, d = q.shape
    out: list[Violation] = []
    for m in range(m_units):
        err = abs(float(q[m].sum()) - 1.0)
        if err > tol:
            out.append(Violation("row_sum", m, -1, err))
    neg = np.argwhere(q < -tol)
    for m, j in neg:
        out.append(Violation("negative", int(m), int(j), float(-q[m, j])))
    for m in range(m_units - 1):
        gapv = np.cumsum(q[m])[:-1] - np.cumsum(q[m + 1])[:-1]
        for j in np.nonzero(gapv > tol)[0]:
            out.append(Violation("dominance", m, int(j), float(gapv[j])))
    return out


def unconstrained_step(q_prev: np.ndarray, reward_estimate: np.ndarray, eta: float) -> np.ndarray:
    """Elementwise multiplicative update q * exp(eta * reward estimate)."""
    return q_prev * np.exp(eta * np.asarray(reward_estimate, dtype=float))


def project_to_Q(
    q_tilde: np.ndarray,
    allowed: Optional[np.ndarray] = None,
    tol: float = DEFAULT_PROJECTION_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> ProjectionResult:
    """Unnormalized-KL projection onto the occupancy polytope.

    The returned certificate `gap` bounds the KKT residuals: layer-sum error,
    dominance violation, and complementary slackness of the dominance
    multipliers. Stationarity is exact by construction (the iterate is the
    dual-feasible exponential reweighting of the input).
    """
    q_tilde = np.asarray(q_tilde, dtype=float)
    if allowed is None:
        allowed = np.ones(q_tilde.shape, dtype=bool)
    if np.any(q_tilde[allowed] <= 0.0) or not np.all(np.isfinite(q_tilde[allowed])):
        raise ValueError("projection input must be finite and positive on feasible cells")
    if not np.all(allowed[:, 0]):
        raise ValueError("grid minimum must be feasible in every layer")
    q, _lam, _nu, sweeps, gap = project_dual_ascent(
        np.ascontiguousarray(q_tilde), np.ascontiguousarray(allowed), tol, max_sweeps
    )
    measure = OccupancyMeasure(q)
    if gap > tol:
        raise ProjectionError(
            f"projection stopped at gap {gap:.3e} after {sweeps} sweeps (tol {tol:.1e})",
            best=measure, gap=float(gap),
        )
    return ProjectionResult(measure=measure, gap=float(gap), sweeps=int(sweeps))


def unnormalized_kl(q: np.ndarray, q_tilde: np.ndarray) -> float:
    """D(q || q_tilde) = sum q log(q/q_tilde) - q + q_tilde over supported cells."""
    q = np.asarray(q, dtype=float)
    q_tilde = np.asarray(q_tilde, dtype=float)
    total = float(np.sum(q_tilde) - np.sum(q))
    pos = q > 0
    if np.any(pos & (q_tilde <= 0)):
        return float("inf")
    total += float(np.sum(q[pos] * np.log(q[pos] / q_tilde[pos])))
    return total


def recover_policy(q: np.ndarray, tol: float = 1e-6, validate: bool = True) -> Policy:
    """Greedy monotone transport realizing the marginals as a sampling policy.

    For each transition, the slot-m mass (as source) is routed to slot-(m+1)
    bids (as sinks) from the highest bid downward, never routing above the
    source bid; stochastic dominance guarantees this never gets stuck. Rows
    of unvisited sources default to a point mass at the grid minimum.
    """
    q = np.ascontiguousarray(q, dtype=float)
    if validate:
        violations = [v for v in q_membership(q, tol) if v.kind != "row_sum"]
        if violations:
            raise ValueError(f"marginals are outside the occupancy polytope: {violations[:3]}")
    transitions = _kernels.transport_plan(q)
    return Policy(initial=q[0] / q[0].sum(), transitions=transitions)


def induced_marginals(policy: Policy) -> OccupancyMeasure:
    """Forward recursion: push the slot-1 law through the transition rows."""
    m_units = policy.transitions.shape[0] + 1
    d = policy.initial.size
    q = np.zeros((m_units, d))
    q[0] = policy.initial
    for m in range(m_units - 1):
        q[m + 1] = q[m] @ policy.transitions[m]
    return OccupancyMeasure(q)


def policy_sample(policy: Policy, rng: np.random.Generator, grid: BidGrid) -> BidVector:
    """Draw a bid vector: slot 1 from the initial law, then row by row.

    Consumes exactly one uniform per slot, in slot order.
    """
    m_units = policy.transitions.shape[0] + 1
    uniforms = rng.random(m_units)
    indices = _kernels.sample_chain(policy.initial, policy.transitions, uniforms)
    return trusted_bid(indices, grid)


def omd_eta_schedule(mode: FeedbackMode, grid_size: int, horizon: int) -> float:
    """Rates from the mirror-descent regret analysis (M-free)."""
    if grid_size < 2 or horizon < 1:
        raise ValueError("grid size and horizon must be positive")
    if mode is FeedbackMode.FULL_INFO:
        return math.sqrt(math.log(grid_size) / horizon)
    return math.sqrt(math.log(grid_size) / (grid_size * horizon))


def uniform_policy(allowed: np.ndarray) -> Policy:
    """Uniform over feasible successors: the standard initialization."""
    m_units, d = allowed.shape
    initial = allowed[0].astype(float)
    initial /= initial.sum()
    transitions = np.zeros((max(m_units - 1, 0), d, d))
    for m in range(m_units - 1):
        for b in range(d):
            feas = allowed[m + 1, : b + 1]
            row = np.zeros(d)
            if feas.any():
                row[: b + 1] = feas / feas.sum()
            else:
                row[0] = 1.0
            transitions[m, b] = row
    return Policy(initial=initial, transitions=transitions)


class OmdBidder:
    """Stateful mirror-descent learner for one run."""

    def __init__(
        self,
        valuation: ValuationProfile,
        grid: BidGrid,
        horizon: int,
        mode: FeedbackMode = FeedbackMode.BANDIT_IX,
        eta: Optional[float] = None,
        gamma: Optional[float] = None,
        ix_delta: float = 0.05,
        seed: int = 0,
        projection_tol: float = DEFAULT_PROJECTION_TOL,
    ):
        self.valuation = valuation
        self.grid = grid
        self.horizon = horizon
        self.mode = mode
        self.eta = eta if eta is not None else omd_eta_schedule(mode, grid.count, horizon)
        self.allowed = np.ascontiguousarray(valuation.ir_mask(grid))
        if mode is FeedbackMode.BANDIT_IX:
            self.gamma = (np.full(valuation.demand, float(gamma)) if gamma is not None
                          else ix_gamma_schedule(self.allowed, horizon, ix_delta))
        else:
            self.gamma = np.zeros(valuation.demand)
        self.projection_tol = projection_tol
        self.rng = np.random.default_rng(seed)
        self.policy = uniform_policy(self.allowed)
        self.q = induced_marginals(self.policy).probs
        self._pending: Optional[BidVector] = None

    @property
    def demand(self) -> int:
        return self.valuation.demand

    def propose(self) -> BidVector:
        bid = policy_sample(self.policy, self.rng, self.grid)
        self._pending = bid
        return bid

    def reward_estimate(self, allocation: int, competing: Optional[CompetingBids],
                        tie: TieBreak, bidder_priority: Optional[int]) -> np.ndarray:
        """Per-cell reward estimate for the round just played."""
        m_units, d = self.q.shape
        est = np.zeros((m_units, d))
        v = self.valuation.values
        if self.mode is FeedbackMode.FULL_INFO:
            if competing is None:
                raise ValueError("full-information feedback requires the competing bids")
            c = competing.indices[:m_units]
            grid_idx = np.arange(d)
            greater = grid_idx[None, :] > c[:, None]
            equal = grid_idx[None, :] == c[:, None]
            if competing.priorities is None:
                won = greater | (equal & (tie is TieBreak.BIDDER_WINS))
            else:
                pri = bidder_priority if bidder_priority is not None else 2**31
                won = greater | (equal & (pri > competing.priorities[:m_units])[:, None])
            margin = v[:, None] - self.grid.values[None, :]
            est = np.where(won & self.allowed, margin, 0.0)
            return est
        played = self._pending
        for m in range(m_units):
            j = int(played.indices[m])
            won = m < allocation
            w = (v[m] - self.grid.values[j]) if won else 0.0
            denom = max(float(self.q[m, j]), Q_FLOOR) + float(self.gamma[m])
            est[m, j] = w / denom
        return est

    def observe(self, allocation: int, competing: Optional[CompetingBids] = None,
                tie: TieBreak = TieBreak.BIDDER_WINS,
                bidder_priority: Optional[int] = None) -> None:
        if self._pending is None:
            raise RuntimeError("observe called before propose")
        est = self.reward_estimate(allocation, competing, tie, bidder_priority)
        q_tilde = unconstrained_step(self.q, est, self.eta)
        # invariants hold by construction here, so call the kernel directly
        q, _lam, _nu, sweeps, gap = project_dual_ascent(
            q_tilde, self.allowed, self.projection_tol, DEFAULT_MAX_SWEEPS
        )
        if gap > self.projection_tol:
            raise ProjectionError(
                f"projection stopped at gap {gap:.3e} after {sweeps} sweeps",
                best=OccupancyMeasure(q), gap=float(gap),
            )
        self.q = q
        self.policy = recover_policy(self.q, validate=False)
        self._pending = None


def omd_round(
    bidder: OmdBidder,
    allocation: int,
    competing: Optional[CompetingBids] = None,
    tie: TieBreak = TieBreak.BIDDER_WINS,
) -> OccupancyMeasure:
    """Apply one round of feedback to `bidder`; returns the updated measure."""
    bidder.observe(allocation, competing, tie)
    return OccupancyMeasure(bidder.q)


def run_omd(
    adversary,
    valuation: ValuationProfile,
    grid: BidGrid,
    horizon: int,
    mode: FeedbackMode = FeedbackMode.BANDIT_IX,
    tie: TieBreak = TieBreak.BIDDER_WINS,
    seed: int = 0,
    eta: Optional[float] = None,
    gamma: Optional[float] = None,
):
    """Run one mirror-descent learner against an adversary for `horizon` rounds."""
    from .auction import settle
    from .exp_weights import RoundRecord, Trajectory

    bidder = OmdBidder(valuation, grid, horizon, mode=mode, eta=eta, gamma=gamma, seed=seed)
    trajectory = Trajectory()
    notify = getattr(adversary, "notify", None)
    for t in range(horizon):
        bid = bidder.propose()
        competing = adversary.draw(t)
        outcome = settle(valuation, bid, competing, tie)
        bidder.observe(
            outcome.allocation,
            competing if mode is FeedbackMode.FULL_INFO else None,
            tie,
        )
        if notify is not None:
            notify(bid)
        trajectory.records.append(RoundRecord(
            bid=bid, allocation=outcome.allocation, utility=outcome.utility,
            payment=outcome.payment, reward=outcome.reward,
        ))
    return trajectory
