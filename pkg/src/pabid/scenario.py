"""Scenario files: schema, validation, seeding, and market construction.

A scenario is a single JSON document describing one experiment: the bid
grid, horizon, agents (algorithm, feedback, valuations, optional rate
overrides), the environment, and how many seeded replications to run.
Validation is strict: unknown keys are errors, and every complaint names
the offending field. All randomness derives from one master seed.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adversaries import LowerBoundInstance, StochasticAdversary
from .auction import CompetingBids, ValuationProfile
from .exp_weights import ExpWeightsBidder, FeedbackMode, LearnerConfig
from .grids import make_even_grid
from .mirror_descent import OmdBidder
from .simulator import SelfPlayMarket

_FEEDBACK = {
    "full": FeedbackMode.FULL_INFO,
    "bandit_ipw": FeedbackMode.BANDIT_IPW,
    "bandit_ix": FeedbackMode.BANDIT_IX,
}

_AGENT_KEYS = {"algorithm", "feedback", "valuation", "eta", "gamma"}
_ENV_KEYS = {"kind", "support", "probs", "supply", "tie", "demand", "delta", "variant"}
_TOP_KEYS = {"name", "grid_size", "rounds", "replications", "master_seed",
             "supply", "agents", "environment"}


class ScenarioError(ValueError):
    """Validation failure; `problems` lists field-level messages."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid scenario: " + "; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class AgentSpec:
    algorithm: str                       # "ew" | "omd"
    feedback: str                        # "full" | "bandit_ipw" | "bandit_ix"
    valuation: object                    # list of floats | {"kind": "uniform_sorted", "demand": M}
    eta: Optional[float] = None
    gamma: Optional[float] = None


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: str                            # "self_play" | "stochastic" | "lower_bound"
    support: Optional[list] = None
    probs: Optional[list] = None
    tie: str = "agent_wins"
    demand: Optional[int] = None
    delta: Optional[float] = None
    variant: str = "F"


@dataclass(frozen=True)
class Scenario:
    name: str
    grid_size: int
    rounds: int
    supply: int
    agents: tuple[AgentSpec, ...]
    environment: EnvironmentSpec
    replications: int = 1
    master_seed: int = 0
    raw: dict = field(default_factory=dict, compare=False)


def canonical_hash(document: dict) -> str:
    """Hash of the canonicalized scenario content (key order independent)."""
    payload = json.dumps(document, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(payload).hexdigest()


def validate_scenario(document: dict) -> Scenario:
    problems: list[str] = []
    if not isinstance(document, dict):
        raise ScenarioError(["scenario: document must be a JSON object"])
    for key in document:
        if key not in _TOP_KEYS:
            problems.append(f"{key}: unknown key")

    def need(key, kind, check=None, message=""):
        if key not in document:
            problems.append(f"{key}: required field missing")
            return None
        value = document[key]
        if not isinstance(value, kind) or isinstance(value, bool):
            problems.append(f"{key}: expected {kind.__name__}")
            return None
        if check is not None and not check(value):
            problems.append(f"{key}: {message}")
            return None
        return value

    name = need("name", str, lambda s: len(s) > 0, "must be non-empty")
    grid_size = need("grid_size", int, lambda v: v >= 2, "must be at least 2")
    rounds = need("rounds", int, lambda v: v >= 0, "must be non-negative")
    supply = need("supply", int, lambda v: v >= 1, "must be positive")
    replications = document.get("replications", 1)
    if not isinstance(replications, int) or isinstance(replications, bool) or replications < 1:
        problems.append("replications: must be a positive integer")
        replications = 1
    master_seed = document.get("master_seed", 0)
    if not isinstance(master_seed, int) or isinstance(master_seed, bool):
        problems.append("master_seed: must be an integer")
        master_seed = 0

    agents: list[AgentSpec] = []
    raw_agents = document.get("agents")
    if not isinstance(raw_agents, list) or not raw_agents:
        problems.append("agents: must be a non-empty list")
        raw_agents = []
    for i, raw in enumerate(raw_agents):
        prefix = f"agents[{i}]"
        if not isinstance(raw, dict):
            problems.append(f"{prefix}: must be an object")
            continue
        for key in raw:
            if key not in _AGENT_KEYS:
                problems.append(f"{prefix}.{key}: unknown key")
        algorithm = raw.get("algorithm")
        if algorithm not in ("ew", "omd"):
            problems.append(f"{prefix}.algorithm: must be 'ew' or 'omd'")
        feedback = raw.get("feedback")
        if feedback not in _FEEDBACK:
            problems.append(f"{prefix}.feedback: must be one of {sorted(_FEEDBACK)}")
        valuation = raw.get("valuation")
        if isinstance(valuation, list):
            ok = (valuation and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                    and 0.0 <= v <= 1.0 for v in valuation)
                  and all(valuation[j] >= valuation[j + 1] for j in range(len(valuation) - 1)))
            if not ok:
                problems.append(f"{prefix}.valuation: must be a non-increasing list in [0, 1]")
        elif isinstance(valuation, dict):
            if valuation.get("kind") != "uniform_sorted":
                problems.append(f"{prefix}.valuation.kind: only 'uniform_sorted' is supported")
            demand = valuation.get("demand")
            if not isinstance(demand, int) or isinstance(demand, bool) or demand < 1:
                problems.append(f"{prefix}.valuation.demand: must be a positive integer")
            extra = set(valuation) - {"kind", "demand"}
            for key in sorted(extra):
                problems.append(f"{prefix}.valuation.{key}: unknown key")
        else:
            problems.append(f"{prefix}.valuation: must be a list or a generator object")
        for rate in ("eta", "gamma"):
            if rate in raw and raw[rate] is not None:
                value = raw[rate]
                if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                    problems.append(f"{prefix}.{rate}: must be a positive number")
        agents.append(AgentSpec(
            algorithm=algorithm, feedback=feedback, valuation=valuation,
            eta=raw.get("eta"), gamma=raw.get("gamma"),
        ))

    raw_env = document.get("environment")
    environment = EnvironmentSpec(kind="self_play")
    if not isinstance(raw_env, dict):
        problems.append("environment: must be an object")
    else:
        for key in raw_env:
            if key not in _ENV_KEYS:
                problems.append(f"environment.{key}: unknown key")
        kind = raw_env.get("kind")
        if kind not in ("self_play", "stochastic", "lower_bound"):
            problems.append("environment.kind: must be 'self_play', 'stochastic', or 'lower_bound'")
        tie = raw_env.get("tie", "agent_wins")
        if tie not in ("agent_wins", "agent_loses"):
            problems.append("environment.tie: must be 'agent_wins' or 'agent_loses'")
        if kind == "stochastic":
            support = raw_env.get("support")
            probs = raw_env.get("probs")
            if (not isinstance(support, list) or not support
                    or not all(isinstance(row, list) and row for row in support)):
                problems.append("environment.support: must be a non-empty list of bid rows")
            if (not isinstance(probs, list) or not support or len(probs or []) != len(support or [])
                    or not all(isinstance(p, (int, float)) and not isinstance(p, bool) and p >= 0
                               for p in (probs or []))
                    or abs(sum(probs or [0]) - 1.0) > 1e-9):
                problems.append("environment.probs: must be non-negative and sum to 1, one per support row")
            environment = EnvironmentSpec(kind="stochastic", support=support, probs=probs, tie=tie)
        elif kind == "lower_bound":
            demand = raw_env.get("demand")
            if not isinstance(demand, int) or isinstance(demand, bool) or demand < 3 or demand % 3:
                problems.append("environment.demand: must be a positive multiple of 3")
            delta = raw_env.get("delta")
            if delta is not None and (not isinstance(delta, (int, float)) or isinstance(delta, bool)
                                      or not (0.0 <= delta < 1.0 / 6.0)):
                problems.append("environment.delta: must lie in [0, 1/6)")
            variant = raw_env.get("variant", "F")
            if variant not in ("F", "G"):
                problems.append("environment.variant: must be 'F' or 'G'")
            if isinstance(grid_size, int) and (grid_size - 1) % 3 != 0:
                problems.append("grid_size: lower-bound environments need the price 2/3 on the grid "
                                "(grid_size must be 1 mod 3)")
            environment = EnvironmentSpec(kind="lower_bound", demand=demand, delta=delta,
                                          variant=variant, tie=tie)
        elif kind == "self_play":
            for key in ("support", "probs", "demand", "delta"):
                if key in raw_env:
                    problems.append(f"environment.{key}: not valid for self_play")
            environment = EnvironmentSpec(kind="self_play", tie=tie)

    if problems:
        raise ScenarioError(problems)
    return Scenario(
        name=name, grid_size=grid_size, rounds=rounds, supply=supply,
        agents=tuple(agents), environment=environment,
        replications=replications, master_seed=master_seed, raw=document,
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as err:
            raise ScenarioError([f"file: not valid JSON ({err})"]) from err
    return validate_scenario(document)


def replication_seeds(scenario: Scenario, replication: int) -> list[np.random.SeedSequence]:
    """Per-agent (then environment, then valuation) seed sequences for one replication."""
    root = np.random.SeedSequence(scenario.master_seed)
    rep_seq = root.spawn(scenario.replications)[replication]
    return rep_seq.spawn(len(scenario.agents) + 2)


def _materialize_valuation(spec, seq) -> ValuationProfile:
    if isinstance(spec, list):
        return ValuationProfile(np.asarray(spec, dtype=float))
    rng = np.random.default_rng(seq)
    draws = np.sort(rng.random(spec["demand"]))[::-1]
    return ValuationProfile(draws)


def build_market(scenario: Scenario, replication: int) -> tuple[SelfPlayMarket, int, dict]:
    """Instantiate learners and environment for one replication."""
    if not (0 <= replication < scenario.replications):
        raise ValueError("replication index out of range")
    grid = make_even_grid(scenario.grid_size)
    seqs = replication_seeds(scenario, replication)
    env_seq, valuation_seq = seqs[-2], seqs[-1]
    valuation_children = valuation_seq.spawn(len(scenario.agents))

    horizon = max(scenario.rounds, 1)  # schedules divide by the horizon
    valuations = []
    learners = []
    for i, spec in enumerate(scenario.agents):
        valuation = _materialize_valuation(spec.valuation, valuation_children[i])
        valuations.append(valuation)
        mode = _FEEDBACK[spec.feedback]
        if spec.algorithm == "ew":
            learners.append(ExpWeightsBidder(
                valuation, grid, horizon,
                LearnerConfig(mode=mode, eta=spec.eta, gamma=spec.gamma, seed=seqs[i]),
            ))
        else:
            learners.append(OmdBidder(
                valuation, grid, horizon, mode=mode,
                eta=spec.eta, gamma=spec.gamma, seed=seqs[i],
            ))

    env = None
    env_wins_ties = False
    env_spec = scenario.environment
    if env_spec.kind == "stochastic":
        env_seed = int(np.random.default_rng(env_seq).integers(0, 2**63 - 1))
        support = [
            CompetingBids.from_values(sorted(row), grid)
            for row in env_spec.support
        ]
        if any(c.supply != scenario.supply for c in support):
            raise ScenarioError(["environment.support: rows must have `supply` entries"])
        env = StochasticAdversary(support, env_spec.probs, seed=env_seed)
        env_wins_ties = env_spec.tie == "agent_loses"
    elif env_spec.kind == "lower_bound":
        env_seed = int(np.random.default_rng(env_seq).integers(0, 2**63 - 1))
        delta = env_spec.delta
        instance = LowerBoundInstance(
            demand=env_spec.demand,
            delta=delta if delta is not None else min(1.0 / np.sqrt(max(scenario.rounds, 1)), 1 / 6 - 1e-9),
            variant=env_spec.variant, seed=env_seed,
        )
        if env_spec.demand != scenario.supply:
            raise ScenarioError(["environment.demand: must equal supply for the lower-bound family"])
        env = instance.adversary(grid)
        env_wins_ties = env_spec.tie == "agent_loses"

    market = SelfPlayMarket(learners, valuations, grid, scenario.supply,
                            environment=env, env_wins_ties=env_wins_ties)
    config = {
        "scenario": scenario.raw,
        "replication": replication,
        "config_hash": canonical_hash(scenario.raw),
    }
    return market, replication, config
