import itertools
import math

import numpy as np
import pytest

from trackkit.assign import CostMatrix, MAXIMIZE, fused_iou_cost, greedy_assign, hungarian
from trackkit.detect import Detection
from trackkit.errors import NonFiniteValue
from trackkit.mask_ops import Box


def brute_min(m):
    r, c = m.shape
    if r <= c:
        return min(math.fsum(m[i, p[i]] for i in range(r)) for p in itertools.permutations(range(c), r))
    return min(math.fsum(m[p[j], j] for j in range(c)) for p in itertools.permutations(range(r), c))


def total(m, pairs):
    return math.fsum(m[i, j] for i, j in sorted(pairs))


def test_two_by_two():
    assert hungarian([[1, 2], [3, 5]]) == [(0, 1), (1, 0)]


def test_diagonal_zero():
    m = np.full((4, 4), 100.0)
    np.fill_diagonal(m, 0)
    assert hungarian(m) == [(i, i) for i in range(4)]


def test_empty():
    assert hungarian(np.zeros((0, 3))) == []
    assert hungarian(np.zeros((3, 0))) == []


def test_non_finite():
    with pytest.raises(NonFiniteValue):
        hungarian([[1.0, np.inf]])
    with pytest.raises(NonFiniteValue):
        greedy_assign([[np.nan]], 0.3, maximize=True)


def test_maximize_orientation():
    m = CostMatrix([[0.9, 0.1], [0.2, 0.8]], MAXIMIZE)
    assert hungarian(m) == [(0, 0), (1, 1)]


def test_random_against_brute_force(rng):
    for _ in range(200):
        r, c = (int(v) for v in rng.integers(1, 8, 2))
        m = rng.random((r, c))
        pairs = hungarian(m)
        assert len(pairs) == min(r, c)
        assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})
        assert total(m, pairs) == brute_min(m)


def test_matches_scipy(rng):
    lsa = pytest.importorskip("scipy.optimize").linear_sum_assignment
    for _ in range(50):
        r, c = (int(v) for v in rng.integers(1, 30, 2))
        m = rng.normal(size=(r, c)) * 10
        ri, ci = lsa(m)
        assert total(m, hungarian(m)) == pytest.approx(m[ri, ci].sum(), abs=1e-9)


@pytest.mark.parametrize("shape", [(3, 3), (2, 4), (4, 2), (5, 5)])
def test_lexicographic_ties(rng, shape):
    r, c = shape
    n = max(r, c)
    for _ in range(100):
        m = rng.integers(0, 3, shape).astype(float)
        pad = np.zeros((n, n))
        pad[:r, :c] = m
        best = min(sum(pad[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
        first = next(
            p for p in itertools.permutations(range(n)) if sum(pad[i, p[i]] for i in range(n)) == best
        )
        expected = [(i, first[i]) for i in range(r) if first[i] < c]
        assert hungarian(m) == expected


def test_greedy_examples():
    assert greedy_assign([[0.9, 0.1], [0.2, 0.8]], 0.3, maximize=True) == [(0, 0), (1, 1)]
    assert greedy_assign([[0.1, 0.2]], 0.3, maximize=True) == []
    assert greedy_assign([[0.5]], 0.3, maximize=True) == [(0, 0)]
    assert greedy_assign([[0.1, 0.9]], 0.5) == [(0, 0)]


def test_greedy_properties(rng):
    for _ in range(100):
        m = rng.random(tuple(int(v) for v in rng.integers(1, 7, 2)))
        pairs = greedy_assign(m, 0.4, maximize=True)
        assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})
        assert all(m[i, j] >= 0.4 for i, j in pairs)


def test_fused_iou_cost():
    b = Box(0, 0, 10, 10)
    far = Box(50, 50, 10, 10)
    dets = [Detection(0, b, 1.0), Detection(0, b, 0.5), Detection(0, far, 0.9)]
    cost = fused_iou_cost([b], dets)
    np.testing.assert_allclose(cost.values, [[0.0, 0.5, 1.0]])
    assert cost.orientation == "minimize_cost"


def test_fused_cost_monotone_in_score():
    b = Box(0, 0, 10, 10)
    other = Box(3, 0, 10, 10)
    costs = [fused_iou_cost([b], [Detection(0, other, s)]).values[0, 0] for s in np.linspace(0, 1, 11)]
    assert all(0 <= c <= 1 for c in costs)
    assert all(a >= b for a, b in zip(costs, costs[1:]))
