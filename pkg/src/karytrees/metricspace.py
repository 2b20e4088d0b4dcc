"""Exact metric computations on finite trees and their embeddings.

Path distances use the tree metric d(u,v) = ht(u) + ht(v) - 2 ht(u ^ v).
Hausdorff distances come in two independent flavors: the nested one (max
hanging-subtree height above a rooted subtree) and the embedded one (exact
sup over axis-aligned segment sets under the coordinate-sum metric).

The Prokhorov distance between finitely supported probability measures is
computed exactly through transport feasibility: d_P = inf{eps : m(eps) >=
1 - eps}, with m(eps) the maximum mass matchable across pairs at distance
<= eps (a max-flow problem, solved in exact rational arithmetic).  The scan
runs over the finitely many cross distances where m jumps.  General
Gromov-Hausdorff-Prokhorov distances are never computed exactly; the module
only certifies upper bounds obtained from one explicit common embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .marginals import EmbeddedTree, FiniteMeasure, MarginalTree, Projection, vertex_pos
from .treegrow import GrowingTree


# ---------------------------------------------------------------------------
# path distances
# ---------------------------------------------------------------------------

def _growing_lca_depth(tree: GrowingTree, u: int, v: int, depth: np.ndarray) -> int:
    par = tree.parents()
    a, b = int(u), int(v)
    da, db = int(depth[a]), int(depth[b])
    while da > db:
        a = int(par[a]); da -= 1
    while db > da:
        b = int(par[b]); db -= 1
    while a != b:
        a = int(par[a]); b = int(par[b]); da -= 1
    return da


def path_distance(tree, u, v) -> float:
    """Length of the geodesic between two points.

    On a GrowingTree the points are node ids; on a MarginalTree they are
    positions (vertices or interior edge points).
    """
    if isinstance(tree, GrowingTree):
        depth = tree.depths()
        lca_d = _growing_lca_depth(tree, u, v, depth)
        return float(depth[int(u)] + depth[int(v)] - 2 * lca_d)
    if isinstance(tree, MarginalTree):
        return _marginal_distance(tree, u, v)
    raise TypeError("unsupported tree type")


def _marginal_distance(mt: MarginalTree, p, q) -> float:
    p = mt.canonical(p if isinstance(p, tuple) else vertex_pos(p))
    q = mt.canonical(q if isinstance(q, tuple) else vertex_pos(q))
    hp, hq = mt.height_of(p), mt.height_of(q)
    if p[0] == "e" and q[0] == "e" and p[1] == q[1]:
        return abs(hp - hq)
    bp = p[1] if p[0] == "v" else p[1]          # lowest vertex at/below p
    bq = q[1] if q[0] == "v" else q[1]
    # vertex-level meet
    anc_p = {bp}
    x = bp
    while x != mt.root:
        x = mt.parent[x]
        anc_p.add(x)
    x = bq
    while x not in anc_p:
        x = mt.parent[x]
    meet = x
    if meet == bp and bp != bq:
        h_meet = hp if p[0] == "e" else mt.vertex_height(bp)
    elif meet == bq and bp != bq:
        h_meet = hq if q[0] == "e" else mt.vertex_height(bq)
    else:
        h_meet = mt.vertex_height(meet)
    return abs(hp - h_meet) + abs(hq - h_meet)


# ---------------------------------------------------------------------------
# Hausdorff distances
# ---------------------------------------------------------------------------

def hausdorff_nested(tree: GrowingTree, member: np.ndarray) -> int:
    """Hausdorff distance between a tree and a rooted subtree of it: the
    largest height among subtrees hanging off the subtree's boundary.

    Computed bottom-up from subtree depth maxima (deliberately not via the
    projection map, so it can cross-check projection_gap).
    """
    member = np.asarray(member, dtype=bool)
    if not member[0]:
        raise ValueError("subtree must contain the root")
    par = tree.parents()
    if np.any(~member[par[np.nonzero(member[1:])[0] + 1]]):
        raise ValueError("subtree not connected to the root")
    depth = tree.depths()
    size = tree.num_nodes
    maxdepth = depth.astype(np.int64).copy()
    for x in np.argsort(depth)[::-1]:
        x = int(x)
        if x == 0:
            continue
        p = int(par[x])
        if maxdepth[x] > maxdepth[p]:
            maxdepth[p] = maxdepth[x]
    best = 0
    for x in range(1, size):
        if not member[x] and member[par[x]]:
            best = max(best, int(maxdepth[x] - depth[par[x]]))
    return best


def _segment_key(axis: int, base: dict, length: float):
    return (axis, tuple(sorted(base.items())), length)


def hausdorff_embedded(a: EmbeddedTree, b: EmbeddedTree) -> float:
    """Exact Hausdorff distance between two embedded segment sets sharing a
    coordinate system.

    For a point moving along one segment, its distance to any fixed segment
    is piecewise linear with slopes in {-1, 0, +1}; the supremum of the
    distance-to-set therefore sits at a segment endpoint, a kink, or a
    crossing of a rising and a falling branch.  All candidates are
    enumerated, which keeps the computation exact.
    """
    return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))


def _directed_hausdorff(a: EmbeddedTree, b: EmbeddedTree) -> float:
    best = 0.0
    for axis, base, length in a.segments:
        best = max(best, _sup_over_segment(axis, base, length, b.segments))
    return best


def _pl_params(axis: int, base: dict, seg) -> tuple[float, float, float]:
    """Distance from the moving point base + u*e_axis to a fixed segment, as
    g(u) = d + max(0, c1 - u, u - c2)."""
    saxis, sbase, slen = seg
    rest = 0.0
    for x in (set(base) | set(sbase)) - {axis, saxis}:
        rest += abs(base.get(x, 0) - sbase.get(x, 0))
    if saxis == axis:
        c1 = sbase.get(axis, 0) - base.get(axis, 0)
        return rest, c1, c1 + slen
    # the fixed segment's own axis contributes a point-to-interval distance,
    # constant in u; the moving axis contributes |u - c|
    lo = sbase.get(saxis, 0)
    x = base.get(saxis, 0)
    rest += max(lo - x, 0.0, x - (lo + slen))
    c = sbase.get(axis, 0) - base.get(axis, 0)
    return rest, c, c


def _sup_over_segment(axis: int, base: dict, length: float, segments) -> float:
    params = [_pl_params(axis, base, seg) for seg in segments]

    def h(u: float) -> float:
        return min(d + max(0.0, c1 - u, u - c2) for d, c1, c2 in params)

    cands = {0.0, length}
    for d, c1, c2 in params:
        for c in (c1, c2):
            if 0.0 < c < length:
                cands.add(c)
    for (d1, c11, c12), (d2, c21, c22) in combinations(params, 2):
        # rising branch of one against falling branch of the other
        for (dr, cr), (df, cf) in (((d1, c12), (d2, c21)), ((d2, c22), (d1, c11))):
            u = (cr + cf + df - dr) / 2.0
            if 0.0 < u < length:
                cands.add(u)
    return max(h(u) for u in cands)


# ---------------------------------------------------------------------------
# Prokhorov distance
# ---------------------------------------------------------------------------

@dataclass
class DistanceMatrix:
    """Symmetric nonnegative matrix with zero diagonal over a point list."""

    points: list
    d: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        n = len(self.points)
        if self.d.shape != (n, n):
            raise ValueError("matrix shape must match the point list")
        if np.any(self.d < 0) or np.any(np.diag(self.d) != 0):
            raise ValueError("need a nonnegative matrix with zero diagonal")
        if not np.array_equal(self.d, self.d.T):
            raise ValueError("matrix must be symmetric")
        self._index = {p: i for i, p in enumerate(self.points)}

    def index(self, p) -> int:
        return self._index[p]

    def check_triangle(self, tol: float = 1e-9):
        d = self.d
        for i in range(len(self.points)):
            if np.any(d > d[:, i][:, None] + d[i][None, :] + tol):
                raise ValueError("triangle inequality violated")


def distance_matrix_from_tree(tree: GrowingTree, points: list[int]) -> DistanceMatrix:
    depth = tree.depths()
    n = len(points)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            l = _growing_lca_depth(tree, points[i], points[j], depth)
            d[i, j] = d[j, i] = depth[points[i]] + depth[points[j]] - 2 * l
    return DistanceMatrix(points=list(points), d=d)


class _Dinic:
    """Max flow with Fraction capacities on a small graph."""

    def __init__(self, n: int):
        self.n = n
        self.head: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[Fraction] = []

    def add(self, u: int, v: int, c: Fraction):
        self.head[u].append(len(self.to)); self.to.append(v); self.cap.append(c)
        self.head[v].append(len(self.to)); self.to.append(u); self.cap.append(Fraction(0))

    def max_flow(self, s: int, t: int) -> Fraction:
        flow = Fraction(0)
        while True:
            level = [-1] * self.n
            level[s] = 0
            queue = [s]
            for u in queue:
                for e in self.head[u]:
                    v = self.to[e]
                    if self.cap[e] > 0 and level[v] < 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[t] < 0:
                return flow
            it = [0] * self.n

            def dfs(u: int, pushed: Fraction) -> Fraction:
                if u == t:
                    return pushed
                while it[u] < len(self.head[u]):
                    e = self.head[u][it[u]]
                    v = self.to[e]
                    if self.cap[e] > 0 and level[v] == level[u] + 1:
                        got = dfs(v, min(pushed, self.cap[e]))
                        if got > 0:
                            self.cap[e] -= got
                            self.cap[e ^ 1] += got
                            return got
                    it[u] += 1
                return Fraction(0)

            while True:
                pushed = dfs(s, Fraction(10**18))
                if pushed == 0:
                    break
                flow += pushed


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(float(x)) if not isinstance(x, int) else Fraction(x)


def _matchable_mass(mu_m: list[Fraction], nu_m: list[Fraction],
                    cross: np.ndarray, eps: float) -> Fraction:
    nm, nn = len(mu_m), len(nu_m)
    g = _Dinic(nm + nn + 2)
    s, t = nm + nn, nm + nn + 1
    for i in range(nm):
        g.add(s, i, mu_m[i])
    for j in range(nn):
        g.add(nm + j, t, nu_m[j])
    big = Fraction(2)
    for i in range(nm):
        for j in range(nn):
            if cross[i, j] <= eps:
                g.add(i, nm + j, big)
    return g.max_flow(s, t)


def prokhorov(mu: FiniteMeasure, nu: FiniteMeasure, dmat: DistanceMatrix) -> float:
    """Exact Prokhorov distance between two finitely supported probability
    measures on the matrix's point set.

    Strassen on a finite space: d_P <= eps iff the mass matchable along
    pairs at distance <= eps is at least 1 - eps.  The matchable mass
    m(eps) is a max flow, nondecreasing and piecewise constant in eps with
    jumps only at cross distances, so the infimum is min over candidate
    distances t_j of max(t_j, 1 - m(t_j)), located by bisection.
    """
    if not mu.is_probability() or not nu.is_probability():
        raise ValueError("prokhorov expects probability measures")
    mu_d, nu_d = mu.as_dict(), nu.as_dict()
    for p in list(mu_d) + list(nu_d):
        if p not in dmat._index:
            raise ValueError(f"support point {p!r} missing from the distance matrix")
    mu_pts, nu_pts = sorted(mu_d, key=repr), sorted(nu_d, key=repr)
    mu_m = [_as_fraction(mu_d[p]) for p in mu_pts]
    nu_m = [_as_fraction(nu_d[p]) for p in nu_pts]
    cross = np.array([[dmat.d[dmat.index(p), dmat.index(q)] for q in nu_pts]
                      for p in mu_pts])
    cands = np.unique(np.concatenate([[0.0], cross.ravel()]))

    def feasible(idx: int) -> bool:
        m = _matchable_mass(mu_m, nu_m, cross, float(cands[idx]))
        return Fraction(1) - m <= _as_fraction(float(cands[idx]))

    lo, hi = 0, len(cands) - 1
    if feasible(lo):
        jstar = lo
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if feasible(mid):
                hi = mid
            else:
                lo = mid
        jstar = hi
    t = float(cands[jstar])
    if jstar == 0:
        return max(t, float(1 - _matchable_mass(mu_m, nu_m, cross, t)))
    prev_m = _matchable_mass(mu_m, nu_m, cross, float(cands[jstar - 1]))
    # minimum over [t_{j-1}, t_j): 1 - m(t_{j-1}) if it fits, else t_j
    return float(min(Fraction(1) - prev_m, _as_fraction(t)))


def prokhorov_subset_oracle(mu: FiniteMeasure, nu: FiniteMeasure,
                            dmat: DistanceMatrix) -> float:
    """Brute-force Prokhorov via the defining subset inequalities.

    For every subset A of either support, the least eps with
    mu(A) <= nu(A^eps) + eps is found by scanning the candidate distances;
    the distance is the largest of these thresholds.  Exponential in the
    support size; intended for supports of a handful of points.
    """
    if not mu.is_probability() or not nu.is_probability():
        raise ValueError("oracle expects probability measures")

    def one_side(am: dict, bm: dict) -> float:
        a_pts, b_pts = sorted(am, key=repr), sorted(bm, key=repr)
        worst = 0.0
        for r in range(1, len(a_pts) + 1):
            for sub in combinations(a_pts, r):
                mass_a = _as_fraction(sum(am[p] for p in sub))
                dist_to_a = {
                    q: min(dmat.d[dmat.index(q), dmat.index(p)] for p in sub)
                    for q in b_pts
                }
                cands = sorted({0.0} | set(dist_to_a.values()))
                best = None
                for i, t in enumerate(cands):
                    covered = sum((_as_fraction(bm[q]) for q in b_pts
                                   if dist_to_a[q] <= t), Fraction(0))
                    need = mass_a - covered
                    lo_eps = max(_as_fraction(t), need)
                    nxt = cands[i + 1] if i + 1 < len(cands) else None
                    if nxt is None or lo_eps < _as_fraction(nxt):
                        best = lo_eps if best is None else min(best, lo_eps)
                worst = max(worst, float(best))
        return worst

    am, bm = mu.as_dict(), nu.as_dict()
    return max(one_side(am, bm), one_side(bm, am))


# ---------------------------------------------------------------------------
# GHP upper bound via a common embedding
# ---------------------------------------------------------------------------

def ghp_upper_bound(embed_a: EmbeddedTree, mu_a: FiniteMeasure,
                    embed_b: EmbeddedTree, mu_b: FiniteMeasure,
                    coords_a: dict, coords_b: dict) -> tuple[float, float]:
    """(Hausdorff, Prokhorov) distances realized by one common embedding;
    their maximum upper-bounds the GHP distance of the measured trees.

    ``coords_*`` map each measure's support points to embedded coordinates.
    Both embeddings must place the root at the origin.
    """
    def has_origin(emb: EmbeddedTree) -> bool:
        return any(all(v == 0 for v in c.values()) for c in emb.coords.values())

    if not has_origin(embed_a) or not has_origin(embed_b):
        raise ValueError("embeddings must share the root at the origin")
    dh = hausdorff_embedded(embed_a, embed_b)

    pts_a = [("a", p) for p in mu_a.points]
    pts_b = [("b", p) for p in mu_b.points]
    all_pts = pts_a + pts_b
    coords = {("a", p): coords_a[p] for p in mu_a.points}
    coords.update({("b", p): coords_b[p] for p in mu_b.points})
    n = len(all_pts)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = EmbeddedTree.l1(coords[all_pts[i]], coords[all_pts[j]])
    dmat = DistanceMatrix(points=all_pts, d=d)
    dp = prokhorov(FiniteMeasure(pts_a, mu_a.masses), FiniteMeasure(pts_b, mu_b.masses), dmat)
    return dh, dp
