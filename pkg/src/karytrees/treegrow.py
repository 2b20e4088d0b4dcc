"""Random k-ary growing trees with labeled edges.

The tree starts as a single root-to-leaf edge.  Each growth step selects an
edge uniformly at random, splits it with a new internal node, and attaches
k-1 fresh leaves to that node.  After n steps the tree has n internal nodes,
(k-1)n+1 leaves and kn+1 edges.

Edge labeling: the half of the split edge facing the root keeps the selected
edge's label (no label for the edge at the root), the half facing away gets
label 1, and the fresh leaves get labels 2..k in creation order (the model's
law does not depend on how those k-1 labels are assigned, so a deterministic
assignment keeps runs reproducible).

Storage is flat numpy arrays indexed by node id; an edge is identified with
its child-side endpoint, and a split rewires that child pointer in place so
existing ids stay stable.  About 14 bytes per node, so n = 10^7 at k = 5
(5*10^7 nodes) sits well under a gigabyte.

RNG contract: each growth step consumes exactly one uniform draw from the
supplied generator.
"""

from __future__ import annotations

import json

import numpy as np

NO_LABEL = 0  # label value of the edge adjacent to the root


class GrowingTree:
    """A k-ary growing tree after some number of growth steps.

    Node id 0 is the root; the initial leaf is id 1; the step-m split
    creates internal node k(m-1)+2 and leaves k(m-1)+3 .. km+1.
    """

    __slots__ = ("k", "n", "_size", "_parent", "_label", "_created",
                 "_internal", "_leaf_ids", "_num_leaves", "_root_child")

    def __init__(self, k: int):
        if k < 2:
            raise ValueError("arity k must be at least 2")
        self.k = int(k)
        self.n = 0
        self._size = 2
        self._parent = np.array([-1, 0], dtype=np.int32)
        self._label = np.array([NO_LABEL, NO_LABEL], dtype=np.int8)
        self._created = np.zeros(2, dtype=np.int32)
        self._internal = np.zeros(2, dtype=bool)
        self._leaf_ids = np.array([1], dtype=np.int32)
        self._num_leaves = 1
        self._root_child = 1

    # -- basic queries ------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return self._size

    @property
    def num_edges(self) -> int:
        return self._size - 1

    @property
    def num_leaves(self) -> int:
        return self._num_leaves

    @property
    def num_internal(self) -> int:
        return self.n

    @property
    def root_child(self) -> int:
        """The single node attached to the root (the first branch point once n >= 1)."""
        return self._root_child

    def parent(self, node: int) -> int:
        return int(self._parent[node])

    def label(self, node: int) -> int:
        """Label of the edge above ``node`` (NO_LABEL for the root edge)."""
        return int(self._label[node])

    def created(self, node: int) -> int:
        return int(self._created[node])

    def kind(self, node: int) -> str:
        if node == 0:
            return "root"
        return "internal" if self._internal[node] else "leaf"

    def is_internal(self, node: int) -> bool:
        return bool(self._internal[node])

    def leaf_of_rank(self, rank: int) -> int:
        if not (1 <= rank <= self._num_leaves):
            raise ValueError(f"rank {rank} out of range 1..{self._num_leaves}")
        return int(self._leaf_ids[rank - 1])

    def rank_of_leaf(self, node: int) -> int:
        idx = np.nonzero(self._leaf_ids == node)[0]
        if idx.size == 0:
            raise ValueError(f"node {node} is not a leaf")
        return int(idx[0]) + 1

    @property
    def leaf_ids(self) -> np.ndarray:
        """Leaf node ids in apparition order (index r-1 holds rank r)."""
        return self._leaf_ids[: self._num_leaves]

    def parents(self) -> np.ndarray:
        return self._parent[: self._size]

    def labels(self) -> np.ndarray:
        return self._label[: self._size]

    def internal_mask(self) -> np.ndarray:
        return self._internal[: self._size]

    # -- structure helpers --------------------------------------------------

    def children_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(offsets, order): children of node v are order[offsets[v]:offsets[v+1]],
        sorted by edge label."""
        size = self._size
        par = self._parent[1:size].astype(np.int64)
        counts = np.bincount(par, minlength=size)
        offsets = np.zeros(size + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        # sort primarily by parent, secondarily by label
        key = par * (self.k + 1) + self._label[1:size]
        order = (np.argsort(key, kind="stable") + 1).astype(np.int32)
        return offsets, order

    def child_slots(self, node: int) -> dict[int, int]:
        """label -> child id map; internal nodes carry all labels 1..k, the
        root a single unlabeled slot."""
        size = self._size
        out = {}
        for c in np.nonzero(self._parent[:size] == node)[0]:
            out[int(self._label[c])] = int(c)
        return out

    def depths(self) -> np.ndarray:
        """Distance from the root for every node."""
        size = self._size
        offsets, order = self.children_csr()
        depth = np.zeros(size, dtype=np.int32)
        frontier = np.array([0], dtype=np.int32)
        d = 0
        while frontier.size:
            d += 1
            nxt = [order[offsets[v]:offsets[v + 1]] for v in frontier]
            frontier = np.concatenate(nxt) if nxt else np.empty(0, dtype=np.int32)
            depth[frontier] = d
        return depth

    def height(self) -> int:
        return int(self.depths().max())

    def copy(self) -> "GrowingTree":
        t = GrowingTree.__new__(GrowingTree)
        t.k = self.k
        t.n = self.n
        t._size = self._size
        t._parent = self._parent[: self._size].copy()
        t._label = self._label[: self._size].copy()
        t._created = self._created[: self._size].copy()
        t._internal = self._internal[: self._size].copy()
        t._leaf_ids = self._leaf_ids[: self._num_leaves].copy()
        t._num_leaves = self._num_leaves
        t._root_child = self._root_child
        return t

    # -- growth -------------------------------------------------------------

    def _reserve(self, final_n: int):
        cap = self.k * final_n + 2
        if self._parent.size >= cap:
            return
        for name, fill in (("_parent", -1), ("_label", 0), ("_created", 0)):
            old = getattr(self, name)
            new = np.full(cap, fill, dtype=old.dtype)
            new[: self._size] = old[: self._size]
            setattr(self, name, new)
        new_int = np.zeros(cap, dtype=bool)
        new_int[: self._size] = self._internal[: self._size]
        self._internal = new_int
        leaves = np.zeros((self.k - 1) * final_n + 1, dtype=np.int32)
        leaves[: self._num_leaves] = self._leaf_ids[: self._num_leaves]
        self._leaf_ids = leaves

    def _grow_one(self, c: int):
        """Split the edge above node c (forced choice); one growth step."""
        k = self.k
        m = self.n + 1
        v = self._size
        par, lab, cre, inter = self._parent, self._label, self._created, self._internal
        par[v] = par[c]
        lab[v] = lab[c]
        cre[v] = m
        inter[v] = True
        par[c] = v
        lab[c] = 1
        for j in range(2, k + 1):
            w = v + j - 1
            par[w] = v
            lab[w] = j
            cre[w] = m
            self._leaf_ids[self._num_leaves] = w
            self._num_leaves += 1
        if c == self._root_child:
            self._root_child = v
        self._size += k
        self.n = m


def new_tree(k: int) -> GrowingTree:
    """The step-0 tree: one edge between the root and a single leaf of rank 1."""
    return GrowingTree(k)


def grow_to(tree: GrowingTree, n: int, rng: np.random.Generator) -> GrowingTree:
    """Apply growth steps in place until the tree has n internal nodes.

    Each step draws one uniform and selects the edge whose child-side id is
    1 + floor(u * num_edges); edge ids enumerate 1..num_edges.
    """
    if n < tree.n:
        raise ValueError(f"cannot shrink: tree has {tree.n} steps, asked for {n}")
    steps = n - tree.n
    if steps == 0:
        return tree
    tree._reserve(n)
    draws = rng.random(steps)
    for u in draws:
        c = 1 + int(u * (tree._size - 1))
        tree._grow_one(c)
    return tree


# ---------------------------------------------------------------------------
# split statistics, subtree counts, pruning
# ---------------------------------------------------------------------------

def _subtree_internal_count_from(tree: GrowingTree, root: int,
                                 offsets: np.ndarray, order: np.ndarray) -> int:
    count = 0
    stack = [root]
    internal = tree._internal
    while stack:
        v = stack.pop()
        if internal[v]:
            count += 1
            stack.extend(order[offsets[v]:offsets[v + 1]])
    return count


def root_split(tree: GrowingTree) -> tuple[int, ...]:
    """Internal-node counts of the k subtrees hanging from the first branch
    point, ordered by edge label; the entries sum to n - 1."""
    if tree.n < 1:
        raise ValueError("root split needs at least one internal node")
    offsets, order = tree.children_csr()
    slots = tree.child_slots(tree.root_child)
    return tuple(
        _subtree_internal_count_from(tree, slots[j], offsets, order)
        for j in range(1, tree.k + 1)
    )


def subtree_internal_count(tree: GrowingTree, node: int) -> int:
    """Number of internal nodes in the subtree rooted at ``node`` (inclusive)."""
    if node == 0 or not tree.is_internal(node):
        raise ValueError("node must be an internal node")
    offsets, order = tree.children_csr()
    return _subtree_internal_count_from(tree, node, offsets, order)


def descendant_mass(tree: GrowingTree, node: int) -> tuple[int, int]:
    """Uniform-leaf mass of the subtree at ``node`` as a ratio
    ((k-1)Z + 1, (k-1)n + 1) with Z its internal count."""
    z = subtree_internal_count(tree, node)
    return (tree.k - 1) * z + 1, (tree.k - 1) * tree.n + 1


def derive_leaf_ranks(tree: GrowingTree) -> dict[int, int]:
    """Recompute leaf apparition ranks from structure and creation steps.

    A leaf's rank event is the creation of the nearest ancestor it hangs off
    via an edge labeled >= 2 followed by a label-1 chain; leaves on the all-1
    chain from the root have rank 1.  Matches the incrementally maintained
    ranks, and is the rule used to re-rank pruned trees.
    """
    return _derive_leaf_ranks(tree, tree._created[: tree._size], tree.k)


def _derive_leaf_ranks(tree: GrowingTree, step_of_node: np.ndarray, arity: int) -> dict[int, int]:
    size = tree._size
    offsets, order = tree.children_csr()
    # event (step, label) propagates down label-1 edges
    ev_step = np.zeros(size, dtype=np.int64)
    ev_label = np.zeros(size, dtype=np.int64)
    stack = [0]
    lab = tree._label
    par = tree._parent
    while stack:
        v = stack.pop()
        for c in order[offsets[v]:offsets[v + 1]]:
            l = lab[c]
            if l >= 2:
                ev_step[c] = step_of_node[par[c]]
                ev_label[c] = l
            else:  # label 1 or the root edge: inherit
                ev_step[c] = ev_step[v]
                ev_label[c] = ev_label[v]
            stack.append(int(c))
    ranks = {}
    for leaf in tree.leaf_ids:
        if ev_label[leaf] == 0:
            ranks[int(leaf)] = 1
        else:
            ranks[int(leaf)] = int((arity - 1) * (ev_step[leaf] - 1) + ev_label[leaf])
    return ranks


def retained_mask(tree: GrowingTree, kprime: int) -> np.ndarray:
    """Nodes whose root path uses only edge labels <= kprime (plus the root edge)."""
    if not (2 <= kprime < tree.k):
        raise ValueError("need 2 <= kprime < k")
    size = tree._size
    offsets, order = tree.children_csr()
    keep = np.zeros(size, dtype=bool)
    keep[0] = True
    stack = [0]
    lab = tree._label
    while stack:
        v = stack.pop()
        for c in order[offsets[v]:offsets[v + 1]]:
            if lab[c] <= kprime:
                keep[c] = True
                stack.append(int(c))
    return keep


def prune_labels(tree: GrowingTree, kprime: int) -> tuple[GrowingTree, int]:
    """Discard every edge with label > kprime together with its descendants.

    Returns the pruned tree, which is a valid growing tree of arity kprime
    whose step count equals the number I of retained internal nodes, and I
    itself.  Leaf ranks are re-derived from the retained creation order.
    """
    keep = retained_mask(tree, kprime)
    old_ids = np.nonzero(keep)[0]
    new_of = np.full(tree._size, -1, dtype=np.int64)
    new_of[old_ids] = np.arange(old_ids.size)

    internal_old = old_ids[tree._internal[old_ids]]
    by_step = internal_old[np.argsort(tree._created[internal_old], kind="stable")]
    i_count = by_step.size
    pruned_step_old = np.zeros(tree._size, dtype=np.int64)
    pruned_step_old[by_step] = np.arange(1, i_count + 1)

    out = GrowingTree.__new__(GrowingTree)
    out.k = kprime
    out.n = i_count
    out._size = old_ids.size
    out._parent = np.where(old_ids == 0, -1, new_of[tree._parent[old_ids]]).astype(np.int32)
    out._label = tree._label[old_ids].copy()
    out._internal = tree._internal[old_ids].copy()
    out._root_child = int(new_of[tree._root_child])

    ranks = _derive_leaf_ranks_pruned(tree, old_ids, pruned_step_old, kprime)
    nleaves = (kprime - 1) * i_count + 1
    leaf_ids = np.zeros(nleaves, dtype=np.int32)
    created = np.zeros(old_ids.size, dtype=np.int32)
    created[out._internal] = pruned_step_old[old_ids[out._internal]]
    for old_leaf, r in ranks.items():
        leaf_ids[r - 1] = new_of[old_leaf]
        created[new_of[old_leaf]] = 0 if r == 1 else (r - 2) // (kprime - 1) + 1
    out._created = created
    out._leaf_ids = leaf_ids
    out._num_leaves = nleaves
    return out, i_count


def _derive_leaf_ranks_pruned(tree, old_ids, pruned_step_old, kprime) -> dict[int, int]:
    # rank events on the retained subgraph, using pruned step indices
    keepset = set(int(v) for v in old_ids)
    par = tree._parent
    lab = tree._label
    ev = {0: (0, 0)}
    # process retained nodes in an order where parents come first
    pending = sorted(keepset - {0}, key=lambda v: _retained_depth(par, v, cache={}))
    for c in pending:
        l = int(lab[c])
        p = int(par[c])
        if l >= 2:
            ev[c] = (int(pruned_step_old[p]), l)
        else:
            ev[c] = ev[p]
    ranks = {}
    for c in keepset:
        if c != 0 and not tree._internal[c]:
            step, l = ev[c]
            ranks[c] = 1 if l == 0 else (kprime - 1) * (step - 1) + l
    return ranks


def _retained_depth(par, v, cache):
    d = 0
    x = v
    path = []
    while x != 0 and x not in cache:
        path.append(x)
        x = int(par[x])
    d = cache.get(x, 0)
    for y in reversed(path):
        d += 1
        cache[y] = d
    return cache.get(v, d)


def trees_equal(a: GrowingTree, b: GrowingTree) -> bool:
    return (
        a.k == b.k
        and a.n == b.n
        and np.array_equal(a.parents(), b.parents())
        and np.array_equal(a.labels(), b.labels())
        and np.array_equal(a._created[: a._size], b._created[: b._size])
        and np.array_equal(a.internal_mask(), b.internal_mask())
        and np.array_equal(a.leaf_ids, b.leaf_ids)
    )


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def tree_to_obj(tree: GrowingTree) -> dict:
    nodes = []
    for i in range(tree.num_nodes):
        kind = tree.kind(i)
        nodes.append({
            "id": i,
            "parent": None if i == 0 else tree.parent(i),
            "label": None if tree.label(i) == NO_LABEL else tree.label(i),
            "kind": kind,
            "created": tree.created(i) if kind == "internal" else None,
        })
    return {
        "k": tree.k,
        "n": tree.n,
        "nodes": nodes,
        "leaf_order": [int(v) for v in tree.leaf_ids],
    }


def tree_to_json(tree: GrowingTree) -> str:
    return json.dumps(tree_to_obj(tree), separators=(",", ":"))


def tree_from_obj(obj: dict) -> GrowingTree:
    k = int(obj["k"])
    n = int(obj["n"])
    nodes = obj["nodes"]
    size = k * n + 2
    if len(nodes) != size:
        raise ValueError(f"expected {size} nodes for k={k}, n={n}, got {len(nodes)}")
    ids = [rec["id"] for rec in nodes]
    if sorted(ids) != list(range(size)):
        raise ValueError("node ids must be exactly 0..kn+1")

    t = GrowingTree.__new__(GrowingTree)
    t.k, t.n, t._size = k, n, size
    t._parent = np.full(size, -1, dtype=np.int32)
    t._label = np.zeros(size, dtype=np.int8)
    t._created = np.zeros(size, dtype=np.int32)
    t._internal = np.zeros(size, dtype=bool)
    for rec in nodes:
        i = rec["id"]
        kind = rec["kind"]
        if (kind == "root") != (i == 0) or (kind == "root") != (rec["parent"] is None):
            raise ValueError(f"node {i}: inconsistent root marking")
        if i != 0:
            t._parent[i] = rec["parent"]
            t._label[i] = 0 if rec["label"] is None else rec["label"]
        t._internal[i] = kind == "internal"
        if kind == "internal":
            if rec["created"] is None:
                raise ValueError(f"internal node {i} lacks a creation step")
            t._created[i] = rec["created"]
    leaf_order = [int(v) for v in obj["leaf_order"]]
    nleaves = (k - 1) * n + 1
    if len(leaf_order) != nleaves:
        raise ValueError(f"leaf_order must list {nleaves} leaves")
    t._leaf_ids = np.asarray(leaf_order, dtype=np.int32)
    t._num_leaves = nleaves
    for r, leaf in enumerate(leaf_order, start=1):
        t._created[leaf] = 0 if r == 1 else (r - 2) // (k - 1) + 1
    rc = np.nonzero(t._parent[:size] == 0)[0]
    if rc.size != 1:
        raise ValueError("root must have exactly one child")
    t._root_child = int(rc[0])
    validate_tree(t)
    return t


def tree_from_json(text: str) -> GrowingTree:
    return tree_from_obj(json.loads(text))


def validate_tree(tree: GrowingTree):
    """Check every structural invariant; raises ValueError on the first failure."""
    k, n, size = tree.k, tree.n, tree._size
    if size != k * n + 2:
        raise ValueError("node count must be kn+2")
    if tree.num_leaves != (k - 1) * n + 1:
        raise ValueError("leaf count must be (k-1)n+1")
    if int(tree._internal[:size].sum()) != n:
        raise ValueError("internal count must be n")
    if tree._internal[0] or (size > 1 and tree._label[0] != NO_LABEL):
        raise ValueError("root must be unlabeled and not internal")
    for i in range(1, size):
        slots = tree.child_slots(i) if tree._internal[i] else None
        if tree._internal[i]:
            if sorted(slots) != list(range(1, k + 1)):
                raise ValueError(f"internal node {i} must have slots 1..{k}")
        elif np.any(tree._parent[:size] == i):
            raise ValueError(f"leaf {i} has children")
    if tree._label[tree._root_child] != NO_LABEL or tree._parent[tree._root_child] != 0:
        raise ValueError("root edge must be unlabeled")
    ranks = derive_leaf_ranks(tree)
    for r, leaf in enumerate(tree.leaf_ids, start=1):
        if ranks.get(int(leaf)) != r:
            raise ValueError(f"leaf {leaf}: stored rank {r} != derived {ranks.get(int(leaf))}")
