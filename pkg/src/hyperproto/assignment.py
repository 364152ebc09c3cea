"""Minimum-cost matching of batch features to particles.

The solver is the shortest-augmenting-path form of the Hungarian method with
row/column potentials, O(b^3).  Among equal-cost optima it returns the
lexicographically smallest permutation, found by walking alternating cycles
in the subgraph of tight (zero reduced cost) edges.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import pairwise_hyp_distance

FORMAT_VERSION = 1


def _check_cost(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    return cost


def _shortest_augmenting_path(cost: np.ndarray):
    """Return (row -> column assignment, row potentials, column potentials)."""
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    # owner[j]: row (1-based) holding column j; column 0 is a virtual root
    owner = np.zeros(n + 1, dtype=np.intp)
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free[1:] & (reduced < minv[1:])
            idx = np.flatnonzero(better) + 1
            minv[idx] = reduced[idx - 1]
            way[idx] = j0
            masked = np.where(free, minv, inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    col_of = np.empty(n, dtype=np.intp)
    col_of[owner[1:] - 1] = np.arange(n)
    return col_of, u[1:], v[1:]


def _lexicographic_optimum(tight: np.ndarray, col_of: np.ndarray) -> np.ndarray:
    """Smallest perfect matching (row order) inside the tight-edge graph."""
    n = len(col_of)
    col_of = col_of.copy()
    row_of = np.empty(n, dtype=np.intp)
    row_of[col_of] = np.arange(n)
    neighbours = [np.flatnonzero(tight[i]) for i in range(n)]
    for i in range(n):
        for j in neighbours[i]:
            if j >= col_of[i]:
                break
            start = row_of[j]
            if start < i:
                continue
            # row `start` must move to some other column, ending at col_of[i]
            target = col_of[i]
            parent = {start: None}
            via = {}
            queue = deque([start])
            found = None
            while queue and found is None:
                r = queue.popleft()
                for c in neighbours[r]:
                    if c == j:
                        continue
                    if c == target:
                        found = (r, c)
                        break
                    nxt = row_of[c]
                    if nxt > i and nxt not in parent:
                        parent[nxt] = r
                        via[nxt] = c
                        queue.append(nxt)
            if found is None:
                continue
            r, c = found
            while r is not None:
                prev_col = col_of[r]
                col_of[r] = c
                row_of[c] = r
                c = prev_col
                r_next = parent[r]
                if r_next is not None:
                    c = via[r]
                r = r_next
            col_of[i] = j
            row_of[j] = i
            break
    return col_of


def hungarian(cost) -> np.ndarray:
    """Optimal assignment ``perm`` with ``perm[i]`` the column given to row ``i``.

    Raises ``ValueError`` for non-square or non-finite input.
    """
    cost = _check_cost(cost)
    n = cost.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.intp)
    col_of, u, v = _shortest_augmenting_path(cost)
    scale = 1.0 + float(np.max(np.abs(cost)))
    tight = cost - u[:, None] - v[None, :] <= 1e-9 * scale
    tight[np.arange(n), col_of] = True
    lex = _lexicographic_optimum(tight, col_of)
    rows = np.arange(n)
    # guard against a tolerance-admitted edge that is not exactly optimal
    if sum(cost[rows, lex].tolist()) <= sum(cost[rows, col_of].tolist()):
        return lex
    return col_of


def assignment_cost(cost, perm) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(sum(cost[np.arange(len(perm)), perm].tolist()))


@dataclass
class AssignmentState:
    """Bijection instance id -> particle id over the whole dataset."""

    particle_of: np.ndarray

    def __post_init__(self):
        self.particle_of = np.asarray(self.particle_of, dtype=np.intp)
        if not self.is_bijection():
            raise ValueError("assignment is not a bijection onto particle ids")

    @classmethod
    def random(cls, n: int, rng) -> "AssignmentState":
        rng = np.random.default_rng(rng)
        return cls(rng.permutation(n))

    def is_bijection(self) -> bool:
        n = len(self.particle_of)
        return bool(np.array_equal(np.sort(self.particle_of), np.arange(n)))

    def copy(self) -> "AssignmentState":
        return AssignmentState(self.particle_of.copy())

    def to_json(self, epoch: int) -> str:
        return json.dumps({"version": FORMAT_VERSION, "epoch": int(epoch),
                           "particle_of": self.particle_of.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "AssignmentState":
        doc = json.loads(text)
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported assignment version {doc.get('version')!r}")
        return cls(doc["particle_of"])


def batch_cost(features, batch_ids, state: AssignmentState, positions) -> float:
    """Summed distance from each batch feature to its currently owned particle."""
    batch_ids = np.asarray(batch_ids, dtype=np.intp)
    owned = np.asarray(positions)[state.particle_of[batch_ids]]
    d = pairwise_hyp_distance(np.asarray(features, dtype=float), owned)
    return float(np.trace(d))


def batch_reassign(features, batch_ids, state: AssignmentState, positions) -> AssignmentState:
    """Re-match the particles owned by ``batch_ids`` to the batch's features.

    ``features[i]`` belongs to instance ``batch_ids[i]``.  Only the batch's own
    particles are redistributed, so the global bijection is preserved.  Columns
    are ordered by particle id, which makes a repeat call with the same features
    a no-op even when optima tie.
    """
    batch_ids = np.asarray(batch_ids, dtype=np.intp)
    if len(np.unique(batch_ids)) != len(batch_ids):
        raise ValueError("batch ids must be distinct")
    new = state.copy()
    if len(batch_ids) < 2:
        return new
    pool = np.sort(state.particle_of[batch_ids])
    cost = pairwise_hyp_distance(np.asarray(features, dtype=float), np.asarray(positions)[pool])
    perm = hungarian(cost)
    new.particle_of[batch_ids] = pool[perm]
    return new
