"""Shared test helpers: enumeration oracles and random instance generators."""
from __future__ import annotations

import numpy as np
import pytest

from pabid import BidGrid, NodeWeightTable, ValuationProfile, make_even_grid
from pabid.hindsight import iter_monotone_indices
from pabid.mirror_descent import Policy


def random_valuation(rng: np.random.Generator, demand: int) -> ValuationProfile:
    return ValuationProfile(np.sort(rng.random(demand))[::-1])


def random_weight_table(
    rng: np.random.Generator,
    demand: int,
    grid_size: int,
    magnitude: float = 3.0,
    with_ir_mask: bool = True,
) -> NodeWeightTable:
    grid = make_even_grid(grid_size)
    if with_ir_mask:
        valuation = random_valuation(rng, demand)
    else:
        valuation = ValuationProfile(np.ones(demand))
    weights = rng.uniform(-magnitude, magnitude, size=(demand, grid_size))
    allowed = valuation.ir_mask(grid)
    weights[~allowed] = 0.0
    return NodeWeightTable(weights=weights, allowed=allowed, grid=grid, valuation=valuation)


def feasible_vectors(table: NodeWeightTable) -> list[tuple[int, ...]]:
    """All monotone index vectors whose cells are all individually rational."""
    out = []
    for idx in iter_monotone_indices(table.demand, table.grid.count):
        if all(table.allowed[m, j] for m, j in enumerate(idx)):
            out.append(tuple(int(j) for j in idx))
    return out


def softmax_path_law(table: NodeWeightTable, eta: float) -> dict[tuple[int, ...], float]:
    """Exact exponential-weights law over feasible monotone vectors, by enumeration."""
    vectors = feasible_vectors(table)
    scores = np.array([
        eta * sum(table.weights[m, j] for m, j in enumerate(idx)) for idx in vectors
    ])
    scores -= scores.max()
    mass = np.exp(scores)
    mass /= mass.sum()
    return dict(zip(vectors, mass))


def enumerated_marginals(law: dict[tuple[int, ...], float], demand: int, grid_size: int) -> np.ndarray:
    q = np.zeros((demand, grid_size))
    for idx, p in law.items():
        for m, j in enumerate(idx):
            q[m, j] += p
    return q


def random_policy(rng: np.random.Generator, demand: int, grid_size: int) -> Policy:
    """Dirichlet-random rows over feasible (non-increasing) successors."""
    initial = rng.dirichlet(np.ones(grid_size))
    transitions = np.zeros((max(demand - 1, 0), grid_size, grid_size))
    for m in range(demand - 1):
        for b in range(grid_size):
            transitions[m, b, : b + 1] = rng.dirichlet(np.ones(b + 1))
    return Policy(initial=initial, transitions=transitions)


def random_q_member(rng: np.random.Generator, demand: int, grid_size: int) -> np.ndarray:
    from pabid.mirror_descent import induced_marginals

    return induced_marginals(random_policy(rng, demand, grid_size)).probs


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0xC0FFEE)
