"""Finite-dimensional marginal trees, stick-breaking embeddings, projections
onto rooted subtrees, and finitely supported measures.

The marginal of order p of a grown tree is the subtree spanned by the root
and the first (k-1)p+1 leaves, with degree-2 chain vertices contracted into
integer edge lengths.  Its graph structure coincides with the tree at step p.

Positions on a marginal tree are either a vertex or an interior point of an
edge, written ("v", vertex) / ("e", child_vertex, offset) with the offset
measured from the endpoint nearer the root.  Edge ids reuse the child-side
vertex id, like the growing tree's edge convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .treegrow import GrowingTree

Position = tuple  # ("v", vertex) or ("e", child_vertex, offset)


def vertex_pos(v: int) -> Position:
    return ("v", int(v))


def edge_pos(child_vertex: int, offset) -> Position:
    if offset <= 0:
        raise ValueError("interior offsets must be positive; use vertex_pos")
    return ("e", int(child_vertex), offset)


# ---------------------------------------------------------------------------
# MarginalTree
# ---------------------------------------------------------------------------

@dataclass
class MarginalTree:
    """A rooted tree with strictly positive edge lengths and ranked leaves.

    ``parent[v]`` maps each non-root vertex to its parent; ``length[v]`` is
    the length of the edge above v; ``leaf_rank`` maps leaf vertices to
    apparition ranks; ``label[v]``, when present, is the label of the top
    edge of the chain the edge came from (0 for the root edge).
    ``span_pos`` maps every original tree node lying on the spanned subtree
    to its position here (only set when built from a GrowingTree).
    """

    root: int
    parent: dict[int, int]
    length: dict[int, float]
    leaf_rank: dict[int, int]
    label: dict[int, int] = field(default_factory=dict)
    span_pos: dict[int, Position] | None = None

    def __post_init__(self):
        if any(l <= 0 for l in self.length.values()):
            raise ValueError("edge lengths must be strictly positive")
        ranks = sorted(self.leaf_rank.values())
        if len(set(ranks)) != len(ranks):
            raise ValueError("duplicate leaf ranks")
        self._children: dict[int, list[int]] = {v: [] for v in self.vertices()}
        for v, p in self.parent.items():
            self._children[p].append(v)
        for v in self._children:
            self._children[v].sort(key=lambda c: self.label.get(c, 0))
        self._height: dict[int, float] = {self.root: 0}
        stack = [self.root]
        while stack:
            v = stack.pop()
            for c in self._children[v]:
                self._height[c] = self._height[v] + self.length[c]
                stack.append(c)
        if len(self._height) != len(self.parent) + 1:
            raise ValueError("edges do not form a tree rooted at root")
        for v in self.vertices():
            deg = len(self._children[v]) + (0 if v == self.root else 1)
            if deg == 2 and v != self.root:
                raise ValueError(f"vertex {v} has degree 2; chains must be contracted")

    def vertices(self) -> list[int]:
        return [self.root] + list(self.parent.keys())

    def children(self, v: int) -> list[int]:
        return self._children[v]

    def leaves(self) -> list[int]:
        return sorted(self.leaf_rank, key=self.leaf_rank.get)

    def vertex_height(self, v: int) -> float:
        return self._height[v]

    def height_of(self, pos: Position) -> float:
        if pos[0] == "v":
            return self._height[pos[1]]
        _, child, off = pos
        return self._height[self.parent[child]] + off

    def total_length(self) -> float:
        return sum(self.length.values())

    def tree_height(self) -> float:
        return max(self._height.values())

    def canonical(self, pos: Position) -> Position:
        """Snap edge positions at offset 0 / full length to the endpoint vertices."""
        if pos[0] == "v":
            return pos
        _, child, off = pos
        if off == 0:
            return vertex_pos(self.parent[child])
        if off == self.length[child]:
            return vertex_pos(child)
        if not (0 < off < self.length[child]):
            raise ValueError(f"offset {off} outside edge {child} of length {self.length[child]}")
        return pos

    def is_ancestor_vertex(self, a: int, d: int) -> bool:
        """True when vertex a lies on the root path of vertex d (inclusive)."""
        x = d
        while True:
            if x == a:
                return True
            if x == self.root:
                return False
            x = self.parent[x]

    def lowest_vertex(self, pos: Position) -> int:
        """The vertex at or immediately below the position."""
        return pos[1]

    def contains_in_subtree(self, v: int, pos: Position) -> bool:
        """Whether the position belongs to the set of descendants of vertex v."""
        pos = self.canonical(pos)
        if pos[0] == "v":
            return self.is_ancestor_vertex(v, pos[1])
        _, child, _ = pos
        # interior edge point: descendants of v iff v is at or above the
        # upper endpoint of the edge
        return self.is_ancestor_vertex(v, self.parent[child])


def marginal_tree(tree: GrowingTree, p: int) -> MarginalTree:
    """The order-p marginal: span of the root and the first (k-1)p+1 leaves,
    with chains contracted to integer lengths."""
    if not (0 <= p <= tree.n):
        raise ValueError(f"p must lie in 0..{tree.n}")
    nleaves = (tree.k - 1) * p + 1
    kept = tree.leaf_ids[:nleaves]
    mask = spanned_mask(tree, kept)
    par = tree.parents()

    nspan_children = np.zeros(tree.num_nodes, dtype=np.int32)
    span_nodes = np.nonzero(mask)[0]
    for x in span_nodes:
        if x != 0:
            nspan_children[par[x]] += 1

    keptset = set(int(x) for x in kept)
    is_vertex = {0}
    for x in span_nodes:
        xi = int(x)
        if xi in keptset or (xi != 0 and nspan_children[xi] >= 2):
            is_vertex.add(xi)

    parent_map: dict[int, int] = {}
    length: dict[int, float] = {}
    label: dict[int, int] = {}
    span_pos: dict[int, Position] = {}
    for v in is_vertex:
        span_pos[v] = vertex_pos(v)
    for v in sorted(is_vertex):
        if v == 0:
            continue
        chain = []
        x = int(par[v])
        while x not in is_vertex:
            chain.append(x)
            x = int(par[x])
        parent_map[v] = x
        length[v] = len(chain) + 1
        lab = tree.label(chain[-1]) if chain else tree.label(v)
        label[v] = lab
        for i, node in enumerate(reversed(chain), start=1):
            span_pos[node] = edge_pos(v, i)

    leaf_rank = {int(x): r for r, x in enumerate(kept, start=1)}
    return MarginalTree(root=0, parent=parent_map, length=length,
                        leaf_rank=leaf_rank, label=label, span_pos=span_pos)


def spanned_mask(tree: GrowingTree, leaves) -> np.ndarray:
    """Boolean mask of nodes on the union of root paths of the given leaves."""
    par = tree.parents()
    mask = np.zeros(tree.num_nodes, dtype=bool)
    mask[0] = True
    for leaf in leaves:
        x = int(leaf)
        while not mask[x]:
            mask[x] = True
            x = int(par[x])
    return mask


# ---------------------------------------------------------------------------
# stick-breaking embedding
# ---------------------------------------------------------------------------

@dataclass
class EmbeddedTree:
    """A tree realized as axis-aligned segments in summable-sequence space.

    Each leaf's arc occupies its own coordinate axis (the leaf rank); points
    are sparse {axis: value} dicts; the path metric of the source tree equals
    the coordinate-sum (l1) distance on the embedded set.
    """

    segments: list[tuple[int, dict, float]]  # (axis, base point, length)
    coords: dict[int, dict]                  # vertex -> point
    attach: dict[int, dict]                  # leaf rank -> attachment point H^i
    leaf_vertex: dict[int, int]              # leaf rank -> vertex

    @staticmethod
    def l1(a: dict, b: dict) -> float:
        keys = set(a) | set(b)
        return float(sum(abs(a.get(x, 0) - b.get(x, 0)) for x in keys))

    def point_on_segment(self, seg_index: int, offset: float) -> dict:
        axis, base, length = self.segments[seg_index]
        if not (0 <= offset <= length):
            raise ValueError("offset outside segment")
        pt = dict(base)
        pt[axis] = pt.get(axis, 0) + offset
        return pt


def stick_break_embed(mtree: MarginalTree) -> EmbeddedTree:
    """Embed leaves in rank order: the root sits at the origin, leaf 1 runs
    along axis 1 to height ht(L^1), and each later leaf extends from the
    point where its root path leaves the already-embedded subtree, along its
    own axis."""
    leaves = mtree.leaves()
    if not leaves:
        raise ValueError("marginal tree has no ranked leaves")
    ranks = sorted(mtree.leaf_rank.values())
    if ranks != list(range(1, len(ranks) + 1)):
        raise ValueError("leaf ranks must be 1..number of leaves")

    coords: dict[int, dict] = {mtree.root: {}}
    segments: list[tuple[int, dict, float]] = []
    attach: dict[int, dict] = {}
    leaf_vertex: dict[int, int] = {}
    for leaf in leaves:
        rank = mtree.leaf_rank[leaf]
        path = [leaf]
        x = leaf
        while x not in coords:
            x = mtree.parent[x]
            path.append(x)
        anchor = x  # H^i: deepest already-embedded vertex on the root path
        base = coords[anchor]
        run = 0.0
        for v in reversed(path[:-1]):
            run += mtree.length[v]
            pt = dict(base)
            pt[rank] = pt.get(rank, 0) + run
            coords[v] = pt
        segments.append((rank, dict(base), run))
        attach[rank] = dict(base)
        leaf_vertex[rank] = leaf
    return EmbeddedTree(segments=segments, coords=coords, attach=attach,
                        leaf_vertex=leaf_vertex)


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

class Projection:
    """Projection onto a rooted connected node subset of a growing tree:
    pi(x) is the deepest ancestor of x inside the subset (x itself when x
    belongs to it)."""

    def __init__(self, tree: GrowingTree, member: np.ndarray):
        member = np.asarray(member, dtype=bool)
        if member.size != tree.num_nodes:
            raise ValueError("membership mask must cover every node")
        if not member[0]:
            raise ValueError("subtree must contain the root")
        par = tree.parents()
        nonroot = np.nonzero(member)[0]
        bad = [int(v) for v in nonroot if v != 0 and not member[par[v]]]
        if bad:
            raise ValueError(f"subtree not connected: parent of {bad[0]} missing")
        self.tree = tree
        self.member = member
        self._cache: dict[int, int] = {}

    def __call__(self, node: int) -> int:
        member = self.member
        par = self.tree.parents()
        x = int(node)
        path = []
        while not member[x] and x not in self._cache:
            path.append(x)
            x = int(par[x])
        target = self._cache.get(x, x)
        for y in path:
            self._cache[y] = target
        return target

    def boundary_displacements(self) -> np.ndarray:
        """d(x, pi(x)) for every node, via depths."""
        depth = self.tree.depths()
        out = np.zeros(self.tree.num_nodes, dtype=np.int64)
        for x in range(self.tree.num_nodes):
            if not self.member[x]:
                out[x] = depth[x] - depth[self(x)]
        return out


def project_map(tree: GrowingTree, member: np.ndarray) -> Projection:
    return Projection(tree, member)


def projection_gap(tree: GrowingTree, member: np.ndarray) -> int:
    """Z_pi = sup_x d(x, pi(x)) = the largest hanging-subtree height."""
    pi = Projection(tree, member)
    disp = pi.boundary_displacements()
    return int(disp.max()) if disp.size else 0


# ---------------------------------------------------------------------------
# finitely supported measures
# ---------------------------------------------------------------------------

@dataclass
class FiniteMeasure:
    """(point, mass) pairs; points are hashable (node ids or positions)."""

    points: list
    masses: list

    def __post_init__(self):
        if len(self.points) != len(self.masses):
            raise ValueError("points and masses must align")
        if any(m < 0 for m in self.masses):
            raise ValueError("masses must be nonnegative")

    @property
    def total(self):
        return sum(self.masses)

    def is_probability(self, tol: float = 1e-12) -> bool:
        return abs(float(self.total) - 1.0) <= tol

    def as_dict(self) -> dict:
        out: dict = {}
        for p, m in zip(self.points, self.masses):
            out[p] = out.get(p, 0) + m
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteMeasure":
        items = sorted(d.items(), key=lambda kv: repr(kv[0]))
        return cls([p for p, _ in items], [m for _, m in items])

    @classmethod
    def uniform_leaves(cls, tree: GrowingTree) -> "FiniteMeasure":
        w = Fraction(1, tree.num_leaves)
        return cls([int(v) for v in tree.leaf_ids], [w] * tree.num_leaves)


def pushforward_measure(mu: FiniteMeasure, pi: Projection) -> FiniteMeasure:
    """Image measure under the projection; masses at shared images merge."""
    out: dict = {}
    for p, m in zip(mu.points, mu.masses):
        if not isinstance(p, (int, np.integer)):
            raise ValueError("projection pushforward expects node-id support")
        q = pi(int(p))
        out[q] = out.get(q, 0) + m
    return FiniteMeasure.from_dict(out)


def measure_to_obj(mtree: MarginalTree, mu: FiniteMeasure) -> list[dict]:
    """Serialize a measure on a marginal tree: each atom as edge/offset/mass.

    Vertex atoms ride their parent edge at full offset; a root atom rides
    the first child edge at offset 0.
    """
    rows = []
    for p, m in zip(mu.points, mu.masses):
        p = mtree.canonical(p) if isinstance(p, tuple) else vertex_pos(p)
        if p[0] == "v":
            v = p[1]
            if v == mtree.root:
                child = min(mtree.children(v))
                rows.append({"edge": child, "offset": 0.0, "mass": float(m)})
            else:
                rows.append({"edge": v, "offset": float(mtree.length[v]), "mass": float(m)})
        else:
            rows.append({"edge": p[1], "offset": float(p[2]), "mass": float(m)})
    return rows


def measure_from_obj(mtree: MarginalTree, rows: list[dict]) -> FiniteMeasure:
    points, masses = [], []
    for row in rows:
        child, off = int(row["edge"]), row["offset"]
        if off == 0:
            points.append(vertex_pos(mtree.parent[child]))
        elif off == mtree.length[child]:
            points.append(vertex_pos(child))
        else:
            points.append(edge_pos(child, off))
        masses.append(row["mass"])
    return FiniteMeasure(points, masses)


def marginal_to_obj(mt: MarginalTree) -> dict:
    return {
        "vertices": sorted(mt.vertices()),
        "edges": [{"u": int(p), "v": int(v), "len": float(mt.length[v])}
                  for v, p in sorted(mt.parent.items())],
        "root": int(mt.root),
        "leaf_ranks": {str(v): int(r) for v, r in sorted(mt.leaf_rank.items())},
    }


def marginal_from_obj(obj: dict) -> MarginalTree:
    parent = {int(e["v"]): int(e["u"]) for e in obj["edges"]}
    length = {int(e["v"]): e["len"] for e in obj["edges"]}
    leaf_rank = {int(v): int(r) for v, r in obj["leaf_ranks"].items()}
    mt = MarginalTree(root=int(obj["root"]), parent=parent, length=length,
                      leaf_rank=leaf_rank)
    declared = set(int(v) for v in obj["vertices"])
    if declared != set(mt.vertices()):
        raise ValueError("vertex list disagrees with the edge set")
    return mt


# ---------------------------------------------------------------------------
# decreasing mass functions
# ---------------------------------------------------------------------------

@dataclass
class MassFunction:
    """A decreasing function on a marginal tree, stored by vertex values.

    Values are constant along open edges (equal to the lower endpoint's
    value), so the left limit m(x-) equals m(x) everywhere, and the additive
    right limit at a vertex is the sum of its children's values (zero at a
    leaf)."""

    mtree: MarginalTree
    values: dict[int, float]

    def at(self, v: int) -> float:
        return self.values[v]

    def minus(self, v: int) -> float:
        return self.values[v]

    def plus(self, v: int) -> float:
        return sum(self.values[c] for c in self.mtree.children(v))


def measure_from_mass_function(mtree: MarginalTree, m: MassFunction) -> FiniteMeasure:
    """The unique measure with subtree masses m(x): atom m(x) - m(x+) at
    every vertex.  Raises (naming the vertex) when some m(x) < m(x+)."""
    points, masses = [], []
    for v in mtree.vertices():
        atom = m.at(v) - m.plus(v)
        if atom < 0:
            raise ValueError(f"mass function violates m(x) >= m(x+) at vertex {v}")
        if atom != 0:
            points.append(vertex_pos(v))
            masses.append(atom)
    return FiniteMeasure(points, masses)


def mass_function(mtree: MarginalTree, mu: FiniteMeasure) -> MassFunction:
    """Subtree masses m(v) = mu(descendants of v) at every vertex."""
    values = {}
    for v in mtree.vertices():
        values[v] = sum(
            m for p, m in zip(mu.points, mu.masses)
            if mtree.contains_in_subtree(v, p if isinstance(p, tuple) else vertex_pos(p))
        )
    return MassFunction(mtree, values)
