"""Bipartite assignment on cost / similarity matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonFiniteValue
from .mask_ops import Box

MINIMIZE = "minimize_cost"
MAXIMIZE = "maximize_similarity"


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    orientation: str = MINIMIZE

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1 and v.size == 0:
            v = v.reshape(0, 0)
        if v.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {v.shape}")
        if self.orientation not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def maximize(self) -> bool:
        return self.orientation == MAXIMIZE


def _as_cost_matrix(m, maximize: bool | None) -> CostMatrix:
    if isinstance(m, CostMatrix):
        if maximize is not None and maximize != m.maximize:
            raise ValueError("maximize flag contradicts the matrix orientation")
        return m
    return CostMatrix(np.asarray(m, dtype=np.float64), MAXIMIZE if maximize else MINIMIZE)


def _check_finite(v: np.ndarray) -> None:
    if not np.isfinite(v).all():
        raise NonFiniteValue("assignment matrix contains NaN or infinite entries")


def _solve_square(c: np.ndarray):
    """Shortest-augmenting-path Hungarian method on a square cost matrix.

    Returns ``(row_to_col, u, v)`` where ``u``/``v`` are dual potentials
    with ``u[i] + v[j] <= c[i, j]`` and equality on assigned pairs.
    """
    n = c.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    cost = np.zeros((n + 1, n + 1))
    cost[1:, 1:] = c
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.empty(n, dtype=np.int64)
    row_to_col[p[1:] - 1] = np.arange(n)
    return row_to_col, u[1:], v[1:]


def _lexicographic_refine(c: np.ndarray, row_to_col: np.ndarray, u, v) -> np.ndarray:
    """Among optimal assignments pick the lexicographically smallest one.

    Optimal assignments are exactly the perfect matchings on tight edges
    (zero reduced cost) of an optimal dual solution, so row by row we swap
    in the smallest tight column reachable through an alternating cycle.
    """
    n = c.shape[0]
    scale = 1.0 + float(np.abs(c).max(initial=0.0))
    tight = (c - u[:, None] - v[None, :]) <= 1e-9 * scale
    r2c = row_to_col.copy()
    c2r = np.empty(n, dtype=np.int64)
    c2r[r2c] = np.arange(n)
    fixed = np.zeros(n, dtype=bool)
    for r in range(n):
        fixed[r] = True
        for col in np.flatnonzero(tight[r]):
            if col >= r2c[r]:
                break
            # need an alternating path from row c2r[col] back to column r2c[r]
            start = c2r[col]
            if fixed[start]:
                continue
            target = r2c[r]
            parent = {start: None}
            queue = [start]
            found_row = None
            while queue and found_row is None:
                nxt = []
                for row in queue:
                    if tight[row, target]:
                        found_row = row
                        break
                    for cc in np.flatnonzero(tight[row]):
                        rr = c2r[cc]
                        if cc == r2c[row] or fixed[rr] or rr in parent:
                            continue
                        parent[rr] = row
                        nxt.append(rr)
                queue = nxt
            if found_row is None:
                continue
            # rotate: each row on the path takes the column of its parent's match
            row = found_row
            new_col = target
            while row is not None:
                old = r2c[row]
                r2c[row] = new_col
                c2r[new_col] = row
                new_col = old
                row = parent[row]
            r2c[r] = col
            c2r[col] = r
            break
    return r2c


def hungarian(m, maximize: bool | None = None) -> list[tuple[int, int]]:
    """Optimal assignment of ``min(rows, cols)`` pairs, sorted by row.

    Among equally good assignments the lexicographically smallest
    ``(row, col)`` list is returned, so results are reproducible.
    """
    cm = _as_cost_matrix(m, maximize)
    vals = cm.values
    _check_finite(vals)
    rows, cols = vals.shape
    if rows == 0 or cols == 0:
        return []
    c = -vals if cm.maximize else vals.copy()
    n = max(rows, cols)
    # any constant padding is neutral: every complete assignment uses the
    # same number of padded cells
    sq = np.zeros((n, n))
    sq[:rows, :cols] = c
    raw, u, v = _solve_square(sq)
    refined = _lexicographic_refine(sq, raw, u, v)
    # guard against tolerance artefacts in the tight-edge test
    if np.sum(sq[np.arange(n), refined]) > np.sum(sq[np.arange(n), raw]):
        refined = raw
    return [(r, int(refined[r])) for r in range(rows) if refined[r] < cols]


def greedy_assign(m, gate: float, maximize: bool | None = None) -> list[tuple[int, int]]:
    """Repeatedly take the best remaining entry passing ``gate``.

    For similarities an entry passes when ``value >= gate``; for costs when
    ``value <= gate``.  Ties go to the smaller ``(row, col)``.
    """
    cm = _as_cost_matrix(m, maximize)
    vals = cm.values
    _check_finite(vals)
    if vals.size == 0:
        return []
    r, c = np.nonzero(vals >= gate) if cm.maximize else np.nonzero(vals <= gate)
    key = -vals[r, c] if cm.maximize else vals[r, c]
    order = np.lexsort((c, r, key))
    used_r, used_c = set(), set()
    pairs = []
    for k in order:
        i, j = int(r[k]), int(c[k])
        if i in used_r or j in used_c:
            continue
        used_r.add(i)
        used_c.add(j)
        pairs.append((i, j))
    return sorted(pairs)


def iou_matrix(a: Sequence[Box], b: Sequence[Box]) -> np.ndarray:
    """Pairwise box IoU, shape ``(len(a), len(b))``."""
    if not a or not b:
        return np.zeros((len(a), len(b)))
    A = np.array([[q.x, q.y, q.x2, q.y2] for q in a])
    B = np.array([[q.x, q.y, q.x2, q.y2] for q in b])
    iw = np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0])
    ih = np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def fused_iou_cost(track_boxes: Sequence[Box], dets) -> CostMatrix:
    """Cost ``1 - IoU * score``: IoU similarity weighted by detection confidence."""
    iou = iou_matrix(list(track_boxes), [d.box for d in dets])
    scores = np.array([d.score for d in dets], dtype=np.float64)
    sim = iou * scores[None, :] if len(dets) else iou
    return CostMatrix(1.0 - sim, MINIMIZE)
