"""Two-parameter (alpha, theta) Chinese restaurant processes, plus the two
correspondences that read restaurant configurations off a growing tree.

Seating rule with n clients at L tables of sizes n_1..n_L: client n+1 joins
table i with probability (n_i - alpha)/(n + theta) and opens a new table
with probability (theta + alpha L)/(n + theta).  One uniform draw decides
each client.

Tree correspondences (arity k):

* spine tables of a leaf: one table per vertex strictly between the root
  and the leaf; the table of vertex v holds the internal nodes whose branch
  point with the leaf is v (v included).  The leaf's root distance is the
  table count plus one.  For the rank-1 leaf the table-size trajectory is a
  (1/k, 1/k) restaurant.
* attachment tables above the order-p marginal: one table per internal node
  sitting on the marginal's chains without being one of its branch points;
  the table size counts that node together with the internal nodes of its
  k-1 hanging subtrees.  The trajectory is a (1/k, p + 1/k) restaurant,
  starting empty at step p.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .marginals import spanned_mask
from .treegrow import GrowingTree


@dataclass
class CRPState:
    """Restaurant configuration: parameters plus table sizes in apparition order."""

    alpha: float
    theta: float
    table_sizes: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if not (self.theta > -self.alpha):
            raise ValueError("theta must exceed -alpha")
        if any(s < 1 for s in self.table_sizes):
            raise ValueError("table sizes must be positive")

    @property
    def clients(self) -> int:
        return sum(self.table_sizes)

    @property
    def table_count(self) -> int:
        return len(self.table_sizes)

    def copy(self) -> "CRPState":
        return CRPState(self.alpha, self.theta, list(self.table_sizes))

    def seat_probabilities(self) -> list[float]:
        """Join probabilities per table followed by the new-table probability."""
        n, L = self.clients, self.table_count
        denom = n + self.theta
        probs = [(s - self.alpha) / denom for s in self.table_sizes]
        probs.append((self.theta + self.alpha * L) / denom)
        return probs

    def seat(self, u: float) -> int:
        """Seat one client from a uniform draw; returns the table index
        (table_count means a new table was opened)."""
        probs = self.seat_probabilities()
        acc = 0.0
        for i, p in enumerate(probs[:-1]):
            acc += p
            if u < acc:
                self.table_sizes[i] += 1
                return i
        self.table_sizes.append(1)
        return len(self.table_sizes) - 1


def crp_run(
    alpha: float,
    theta: float,
    steps: int,
    rng: np.random.Generator,
    init: CRPState | None = None,
) -> tuple[CRPState, np.ndarray]:
    """Run ``steps`` seatings from ``init`` (empty by default).

    Returns the final state and a history array with one row per step:
    (step, table_count, largest_table).
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    state = init.copy() if init is not None else CRPState(alpha, theta)
    if init is not None and (init.alpha != alpha or init.theta != theta):
        raise ValueError("init parameters disagree with the run parameters")
    hist = np.zeros((steps, 3), dtype=np.int64)
    draws = rng.random(steps)
    start = state.clients
    for i in range(steps):
        state.seat(draws[i])
        hist[i, 0] = start + i + 1
        hist[i, 1] = state.table_count
        hist[i, 2] = max(state.table_sizes)
    return state, hist


def trajectory_csv(hist: np.ndarray) -> str:
    lines = ["step,table_count,largest_table"]
    for row in hist:
        lines.append(f"{row[0]},{row[1]},{row[2]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# tree-to-restaurant correspondences
# ---------------------------------------------------------------------------

def spine_tables(tree: GrowingTree, leaf_rank: int) -> CRPState:
    """Restaurant read off the path from the root to the leaf of the given
    rank; table sizes are listed in table-apparition (vertex creation)
    order.  Table count equals the leaf's root distance minus one, and for
    any leaf the sizes sum to the number of internal nodes."""
    leaf = tree.leaf_of_rank(leaf_rank)
    par = tree.parents()
    spine = []
    x = int(par[leaf])
    while x != 0:
        spine.append(x)
        x = int(par[x])
    on_spine = set(spine) | {0, leaf}
    counts = {v: 0 for v in spine}
    hook: dict[int, int] = {}

    def branch_vertex(node: int) -> int:
        x = int(node)
        path = []
        while x not in on_spine and x not in hook:
            path.append(x)
            x = int(par[x])
        target = hook.get(x, x)
        for y in path:
            hook[y] = target
        return target

    internal = tree.internal_mask()
    for u in range(1, tree.num_nodes):
        if internal[u]:
            v = branch_vertex(u) if u not in counts else u
            counts[v] += 1
    sizes = [counts[v] for v in sorted(spine, key=tree.created)]
    return CRPState(1.0 / tree.k, 1.0 / tree.k, sizes)


def attachment_tables(tree: GrowingTree, p: int) -> CRPState:
    """Restaurant of the subtrees grafted above the order-p marginal.

    Tables are the internal nodes created after step p that lie on the
    marginal's chains; each table's size counts the node itself plus the
    internal nodes of its k-1 hanging subtrees.  Empty at n = p; the size
    trajectory is a (1/k, p + 1/k) restaurant.
    """
    if not (0 <= p <= tree.n):
        raise ValueError(f"p must lie in 0..{tree.n}")
    nleaves = (tree.k - 1) * p + 1
    mask = spanned_mask(tree, tree.leaf_ids[:nleaves])
    par = tree.parents()
    internal = tree.internal_mask()
    created = tree._created[: tree.num_nodes]

    # internal-node counts of every subtree, bottom-up over depth order
    depth = tree.depths()
    sub = internal.astype(np.int64).copy()
    for x in np.argsort(depth)[::-1]:
        x = int(x)
        if x != 0:
            sub[par[x]] += sub[x]

    hosts = [
        v for v in range(1, tree.num_nodes)
        if internal[v] and mask[v] and created[v] > p
    ]
    hosts.sort(key=lambda v: created[v])
    sizes = []
    for v in hosts:
        hang = sum(
            int(sub[c]) for c in np.nonzero(par[: tree.num_nodes] == v)[0]
            if not mask[c]
        )
        sizes.append(1 + hang)
    return CRPState(1.0 / tree.k, p + 1.0 / tree.k, sizes)
