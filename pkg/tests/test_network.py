import itertools

import numpy as np
import pytest

from heightspin import network
from heightspin.network import BudgetError, PairwiseNetwork


def brute(net):
    total = 0.0
    for xs in itertools.product(*[range(s) for s in net.sizes]):
        w = 1.0
        for i, u in net.unary.items():
            w *= u[xs[i]]
        for (i, j), p in net.pair.items():
            w *= p[xs[i], xs[j]]
        total += w
    return total


def random_net(rng, sizes, pairs):
    net = PairwiseNetwork(sizes)
    for i, s in enumerate(sizes):
        net.add_unary(i, rng.uniform(0.5, 1.5, size=s))
    for i, j in pairs:
        net.add_pair(i, j, rng.uniform(0.1, 1.0, size=(sizes[i], sizes[j])))
    return net


def test_contract_matches_enumeration(rng):
    net = random_net(rng, [3, 4, 2, 3], [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    assert net.contract() == pytest.approx(brute(net), rel=1e-12)


def test_open_variables_give_marginal(rng):
    net = random_net(rng, [3, 2, 4], [(0, 1), (1, 2)])
    table = net.contract([2])
    assert table.shape == (4,)
    assert table.sum() == pytest.approx(net.contract(), rel=1e-12)


def test_isolated_variables():
    net = PairwiseNetwork([3, 5])
    assert net.contract() == 15.0
    np.testing.assert_array_equal(net.contract([1]), np.full(5, 3.0))


def test_reversed_pair_and_repeats(rng):
    a = PairwiseNetwork([2, 3])
    w = rng.uniform(size=(3, 2))
    a.add_pair(1, 0, w)
    a.add_pair(0, 1, w.T)
    assert a.contract() == pytest.approx(float(np.sum(w.T**2)))


def test_shape_errors():
    net = PairwiseNetwork([2, 2])
    with pytest.raises(ValueError):
        net.add_unary(0, np.ones(3))
    with pytest.raises(ValueError):
        net.add_pair(0, 1, np.ones((2, 3)))


def test_budget(monkeypatch, rng):
    net = random_net(rng, [10] * 6, [(i, j) for i in range(6) for j in range(i + 1, 6)])
    # a tight memory cap forces one wide step, which then trips the work cap
    monkeypatch.setattr(network, "MAX_INTERMEDIATE", 100.0)
    monkeypatch.setattr(network, "MAX_STEP_WORK", 1e5)
    with pytest.raises(BudgetError):
        net.contract()


def test_budget_allows_within_limits(rng):
    net = random_net(rng, [10] * 6, [(i, j) for i in range(6) for j in range(i + 1, 6)])
    assert net.contract() > 0
