"""Self-contained identity/oracle suites behind ``karytrees verify``.

Each suite returns (name, passed, detail) triples; the CLI exits nonzero
and names the first failing invariant.  These are the same cross-checks the
test suite runs, packaged for scripted use.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.stats import chi2 as chi2_dist

from . import analytics, harness, marginals, metricspace, rng as rngmod, treegrow

Check = tuple[str, bool, str]


def verify_qn(k: int, nmax: int, **_) -> list[Check]:
    out = []
    for n in range(1, min(nmax, 4) + 1):
        enum = harness.enumerate_exact(k, n)
        worst = 0.0
        for lam, p in enum.split_pmf.items():
            worst = max(worst, abs(analytics.qn_pmf(k, n, lam) - float(p)))
        out.append((f"split_pmf_vs_enumeration_n{n}", worst <= 1e-12,
                    f"max abs gap {worst:.2e}"))
    for n in range(1, nmax + 1):
        total = analytics.qn_sum_expectation(k, n, lambda *l: np.ones_like(l[0], dtype=float)) \
            if k in (2, 3) else None
        if total is not None:
            out.append((f"split_pmf_normalization_n{n}", abs(total - 1) <= 1e-9,
                        f"sum {total!r}"))
    return out


def verify_dirichlet(k: int, samples: int, seed: int, **_) -> list[Check]:
    out = []
    rng = rngmod.stream(seed, rngmod.AUXILIARY, 10)
    est, se = analytics.simplex_integral(
        analytics.NU_K, k, lambda s: np.ones(s.shape[0]), samples, rng)
    target = math.exp(math.lgamma(1.0 / k) - math.log(k))
    out.append((f"nu_k_unit_mass_k{k}", abs(est - target) <= 3 * se,
                f"estimate {est:.6f} target {target:.6f} se {se:.2e}"))
    est2, se2 = analytics.dirichlet_beta_mc(
        np.full(3, 1.0 / 3), np.full(3, 2.0 / 3), samples, rng)
    target2 = analytics.beta_integral(np.full(3, 1.0 / 3))
    out.append(("dirichlet_beta_identity_third", abs(est2 - target2) <= 4 * se2,
                f"estimate {est2:.4f} target {target2:.4f} se {se2:.2e}"))
    return out


def verify_mark(seed: int, draws: int = 10 ** 5, **_) -> list[Check]:
    out = []
    s = (Fraction(1, 2), Fraction(1, 3), Fraction(1, 6))
    pmf = analytics.mark_pmf(s, 2)
    expected = {(1, 2): Fraction(35, 94), (1, 3): Fraction(32, 94),
                (2, 3): Fraction(27, 94)}
    out.append(("mark_pmf_worked_example", pmf == expected, f"{pmf}"))
    out.append(("mark_pmf_total_mass", sum(pmf.values()) == 1,
                f"total {sum(pmf.values())}"))
    rng = rngmod.stream(seed, rngmod.AUXILIARY, 11)
    counts = {key: 0 for key in pmf}
    sf = tuple(float(v) for v in s)
    for _ in range(draws):
        idx, _sub = analytics.mark_sample(sf, 2, rng)
        counts[idx] += 1
    stat = sum((counts[key] - draws * float(p)) ** 2 / (draws * float(p))
               for key, p in pmf.items())
    pval = float(chi2_dist.sf(stat, len(pmf) - 1))
    out.append(("mark_sampler_chi_square", pval > 0.001,
                f"chi2 {stat:.3f} p {pval:.4f} over {draws} draws"))
    return out


def verify_metric(seed: int, cases: int = 60, **_) -> list[Check]:
    out = []
    rng = rngmod.stream(seed, rngmod.AUXILIARY, 12)
    worst_gap, lips_ok, dp_ok = 0.0, True, True
    for _ in range(cases):
        k = int(rng.integers(2, 5))
        n = int(rng.integers(2, 24))
        tree = treegrow.grow_to(treegrow.new_tree(k), n, rng)
        p = int(rng.integers(0, n + 1))
        mask = marginals.spanned_mask(tree, tree.leaf_ids[:(k - 1) * p + 1])
        zpi = marginals.projection_gap(tree, mask)
        dh = metricspace.hausdorff_nested(tree, mask)
        worst_gap = max(worst_gap, abs(zpi - dh))
        pi = marginals.project_map(tree, mask)
        depth = tree.depths()
        for _ in range(10):
            x, y = rng.integers(1, tree.num_nodes, size=2)
            dxy = metricspace.path_distance(tree, int(x), int(y))
            dpq = metricspace.path_distance(tree, pi(int(x)), pi(int(y)))
            if dpq > dxy + 1e-12:
                lips_ok = False
        mu = marginals.FiniteMeasure.uniform_leaves(tree)
        push = marginals.pushforward_measure(mu, pi)
        pts = sorted(set(mu.points) | set(push.points))
        dmat = metricspace.distance_matrix_from_tree(tree, pts)
        if metricspace.prokhorov(mu, push, dmat) > zpi + 1e-12:
            dp_ok = False
    out.append(("hausdorff_equals_projection_gap", worst_gap == 0.0,
                f"max |Z_pi - d_H| {worst_gap}"))
    out.append(("projection_one_lipschitz", lips_ok, "sampled pairs"))
    out.append(("prokhorov_bounded_by_gap", dp_ok, "d_P <= Z_pi on all cases"))

    worst = 0.0
    for _ in range(20):
        pts = list(range(4))
        d = np.zeros((4, 4))
        for i in range(4):
            for j in range(i + 1, 4):
                d[i, j] = d[j, i] = float(rng.integers(1, 8))
        for i in range(4):
            for j in range(4):
                for l in range(4):
                    d[i, j] = min(d[i, j], d[i, l] + d[l, j])
        w1 = rng.integers(1, 5, size=4)
        w2 = rng.integers(1, 5, size=4)
        mu = marginals.FiniteMeasure(pts, [Fraction(int(a), int(w1.sum())) for a in w1])
        nu = marginals.FiniteMeasure(pts, [Fraction(int(a), int(w2.sum())) for a in w2])
        dmat = metricspace.DistanceMatrix(points=pts, d=d)
        fast = metricspace.prokhorov(mu, nu, dmat)
        oracle = metricspace.prokhorov_subset_oracle(mu, nu, dmat)
        worst = max(worst, abs(fast - oracle))
    out.append(("prokhorov_matches_subset_oracle", worst <= 1e-6,
                f"max gap {worst:.2e}"))
    return out


def verify_martingale(k: int, nmax: int = 60, **_) -> list[Check]:
    spec = harness.ExperimentSpec(kind="martingale", k=k, n=nmax)
    res = harness.run_experiment(spec)
    rep = res.reports[0]
    return [("martingale_identity_exact", rep.sample_mean == 0.0,
             f"max gap {rep.sample_mean}")]


def verify_mb(k: int = 2, nmax: int = 3, **_) -> list[Check]:
    out = []
    for n in range(1, min(nmax, 3) + 1):
        spec = harness.ExperimentSpec(kind="markov_branching", k=k, n=n)
        res = harness.run_experiment(spec)
        rep = res.reports[0]
        out.append((f"branching_factorization_n{n}", rep.sample_mean == 0.0,
                    f"max TV {rep.sample_mean}"))
    return out


SUITES = {
    "qn": verify_qn,
    "dirichlet": verify_dirichlet,
    "mark": verify_mark,
    "metric": verify_metric,
    "martingale": verify_martingale,
    "mb": verify_mb,
}
