
import numpy as np
import pytest
from hypothesis import given, strategies as st

from habitree.tree import (EventTree, TreeError, cond_expectation, is_martingale,
                           leaf_path_integral, radau_rule, time_integral_expectation)


def random_tree(seed, M=3, branches=(1, 2, 3)):
    rng = np.random.default_rng(seed)
    parents, probs = [None], [1.0]
    frontier = [0]
    for _ in range(M):
        nxt = []
        for i in frontier:
            k = int(rng.choice(branches))
            p = rng.dirichlet(np.ones(k))
            for j in range(k):
                parents.append(i)
                probs.append(float(p[j]))
                nxt.append(len(parents) - 1)
        frontier = nxt
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.0, M))])
    # Dirichlet draws sum to 1 only up to rounding; renormalize the last child
    tree_probs = np.array(probs)
    for i in range(len(parents)):
        kids = [c for c, p in enumerate(parents) if p == i]
        if kids:
            tree_probs[kids[-1]] = 1.0 - tree_probs[kids[:-1]].sum()
    return EventTree(times, parents, tree_probs)


def enumerate_paths(tree):
    """(leaf, path probability) by walking every root-to-leaf path."""
    out = []
    for leaf in tree.leaves:
        p = 1.0
        for i in tree.path(int(leaf))[1:]:
            p *= tree.trans_prob[i]
        out.append((int(leaf), p))
    return out


def test_cond_expectation_examples():
    t = EventTree.binomial(1)
    assert cond_expectation(t, np.full(t.n, 7.0), 0, 1) == 7.0
    X = np.array([0.0, 2.0, 4.0])
    assert cond_expectation(t, X, 0, 1) == pytest.approx(3.0, abs=1e-15)
    t3 = EventTree.binomial(3)
    top = np.zeros(t3.n)
    top[t3.leaves[0]] = 1.0
    assert cond_expectation(t3, top, 0, 3) == pytest.approx(0.125, abs=1e-15)


def test_cond_expectation_errors():
    t = EventTree.binomial(2)
    X = np.zeros(t.n)
    with pytest.raises(TreeError):
        cond_expectation(t, X, "nope", 2)
    with pytest.raises(ValueError):
        cond_expectation(t, X, 0, 3)
    with pytest.raises(ValueError):
        cond_expectation(t, X, int(t.leaves[0]), 1)


def test_time_integral_examples():
    t = EventTree.binomial(2, T=1.0)
    assert time_integral_expectation(t, np.ones(t.n)) == pytest.approx(1.0, abs=1e-14)
    t3 = EventTree.binomial(3, T=2.5)
    assert time_integral_expectation(t3, np.full(t3.n, 1.7)) == pytest.approx(1.7 * 2.5, abs=1e-13)
    det = EventTree.deterministic(2, T=1.0)
    X = det.times[det.level]  # node process t_k
    assert time_integral_expectation(det, X) == pytest.approx(0.25, abs=1e-15)


def test_is_martingale_examples():
    t = EventTree.binomial(1)
    assert is_martingale(t, np.ones(t.n))
    assert not is_martingale(t, np.array([1.0, 1.2, 0.9]))
    assert is_martingale(t, np.array([1.05, 1.2, 0.9]))


@given(st.integers(0, 10_000))
def test_tower_property_against_path_enumeration(seed):
    tree = random_tree(seed)
    X = np.random.default_rng(seed).standard_normal(tree.n)
    brute = sum(p * X[l] for l, p in enumerate_paths(tree))
    assert cond_expectation(tree, X, 0, tree.M) == pytest.approx(brute, abs=1e-12)
    assert np.allclose(tree.prob[tree.leaves], [p for _, p in enumerate_paths(tree)], atol=1e-15)


@given(st.integers(0, 10_000))
def test_martingale_conditional_expectations(seed):
    tree = random_tree(seed)
    rng = np.random.default_rng(seed)
    X = np.zeros(tree.n)
    X[tree.leaves] = rng.standard_normal(tree.leaves.size)
    X = tree.descendant_weights(tree.M) @ X[tree.leaves]
    assert is_martingale(tree, X, 1e-12)
    for i in range(tree.n):
        for k in range(tree.level[i], tree.M + 1):
            assert cond_expectation(tree, X, i, k) == pytest.approx(X[i], abs=1e-12)


@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_time_integral_linear(seed, a, b):
    tree = random_tree(seed)
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((2, tree.n, tree.Q))
    lhs = time_integral_expectation(tree, a * X + b * Y)
    rhs = a * time_integral_expectation(tree, X) + b * time_integral_expectation(tree, Y)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@pytest.mark.parametrize("q", [1, 2, 3, 5, 10])
def test_radau_exactness(q):
    x, w = radau_rule(q)
    assert x[0] == 0.0
    for k in range(2 * q - 1):
        assert w @ x ** k == pytest.approx(1.0 / (k + 1), abs=1e-13)


def test_leaf_path_integral_matches_brute_force():
    tree = random_tree(3)
    t = tree.point_times()
    X = np.sin(t) + tree.level[:, None]
    got = leaf_path_integral(tree, X)
    for k, leaf in enumerate(tree.leaves):
        ref = 0.0
        for i in tree.path(int(leaf))[:-1]:
            t0, t1 = tree.times[tree.level[i]], tree.times[tree.level[i] + 1]
            ref += -np.cos(t1) + np.cos(t0) + tree.level[i] * (t1 - t0)
        assert got[k] == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("bad", [
    dict(times=[0, 1], parents=[None, 0, 0], probs=[1, 0.5, 0.6]),
    dict(times=[0, 1], parents=[None, None], probs=[1, 1]),
    dict(times=[0, 1, 2], parents=[None, 0], probs=[1, 1]),
    dict(times=[0, 0], parents=[None, 0], probs=[1, 1]),
    dict(times=[0, 1], parents=[None, 0, 0], probs=[1, 0.0, 1.0]),
])
def test_invalid_trees(bad):
    with pytest.raises(TreeError):
        EventTree(**bad)


def test_from_nodes_reports_node_id():
    recs = [{"id": "r", "parent": None}, {"id": "u", "parent": "r", "prob": 0.5},
            {"id": "d", "parent": "r", "prob": 0.6}]
    with pytest.raises(TreeError, match="'r'"):
        EventTree.from_nodes([0, 1], recs)
    recs[2]["prob"] = 0.5
    recs[2]["time_index"] = 0
    with pytest.raises(TreeError, match="'d'"):
        EventTree.from_nodes([0, 1], recs)


def test_breadth_first_order_and_ids():
    recs = [{"id": "d", "parent": "r", "prob": 0.5}, {"id": "r", "parent": None},
            {"id": "u", "parent": "r", "prob": 0.5}]
    t = EventTree.from_nodes([0, 1], recs)
    assert t.ids[0] == "r"
    assert all(t.parent[i] < i for i in range(1, t.n))
    assert t.index("u") in t.children[0]
