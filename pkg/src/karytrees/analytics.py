"""Closed-form objects for the k-ary growing tree model.

Everything here is deterministic mathematics (plus Monte Carlo quadrature):
the one-step split pmf of the tree at its first branch point, the
dislocation densities of the limiting fragmentation trees, generalized
Mittag-Leffler moments, Dirichlet-importance simplex integration, and the
k'-subset marking kernel.

Gamma ratios are always evaluated in log space (``math.lgamma`` /
``scipy.special.gammaln``); the raw Gamma values overflow for all but tiny
arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

# dislocation-measure kinds
NU_K = "nu_k"
NU_K_DOWN = "nu_k_down"
NU_KK = "nu_kk"
NU_KK_DOWN = "nu_kk_down"

_KINDS = (NU_K, NU_K_DOWN, NU_KK, NU_KK_DOWN)

_SIMPLEX_TOL = 1e-12


# ---------------------------------------------------------------------------
# simplex containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MassSplit:
    """A mass-split vector on the simplex (sum 1) or sub-simplex (sum <= 1).

    ``flavor`` is "simplex" or "subsimplex"; entries live in [0, 1].
    """

    s: tuple
    flavor: str

    def __post_init__(self):
        if self.flavor not in ("simplex", "subsimplex"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        total = sum(self.s)
        if any(x < 0 or x > 1 for x in self.s):
            raise ValueError("entries must lie in [0, 1]")
        if self.flavor == "simplex" and abs(total - 1) > _SIMPLEX_TOL:
            raise ValueError(f"simplex entries must sum to 1, got {total}")
        if self.flavor == "subsimplex" and total > 1 + _SIMPLEX_TOL:
            raise ValueError(f"sub-simplex entries must sum to <= 1, got {total}")

    @classmethod
    def simplex(cls, s) -> "MassSplit":
        return cls(tuple(s), "simplex")

    @classmethod
    def subsimplex(cls, s) -> "MassSplit":
        return cls(tuple(s), "subsimplex")

    def decreasing(self) -> "MassSplit":
        return MassSplit(tuple(sorted(self.s, reverse=True)), self.flavor)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.s, dtype=float)


def decreasing_sort(s) -> np.ndarray:
    """Decreasing rearrangement of a split vector."""
    return np.sort(np.asarray(s, dtype=float))[::-1].copy()


def simplex_distance(s, t) -> float:
    """Entrywise absolute-difference sum between two split vectors."""
    a = np.asarray(s, dtype=float)
    b = np.asarray(t, dtype=float)
    if a.shape != b.shape:
        raise ValueError("split vectors must have equal length")
    return float(np.abs(a - b).sum())


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def gamma_k(k: int, x) -> float | np.ndarray:
    """Gamma(1/k + x) / Gamma(1 + x), via log-Gamma differences.

    Nonincreasing in x >= 0 and ~ x**(-(1-1/k)) as x grows.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("x must be >= 0")
    out = np.exp(gammaln(1.0 / k + xa) - gammaln(1.0 + xa))
    return float(out) if np.isscalar(x) or xa.ndim == 0 else out


def beta_n(n: int, x: float) -> float:
    """1 + sum_{j=1}^{floor(nx)} nx(nx-1)...(nx-j+1) / (n(n-1)...(n-j+1)).

    Satisfies (1-x)*beta_n(x) <= 1 on [0, 1].  Terms are accumulated by
    multiplicative updates; the loop stops once a term falls below 1e-18 of
    the running sum (terms are nonnegative and eventually decay like x^j).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if x < 0 or x > 1:
        raise ValueError("x must lie in [0, 1]")
    nx = n * x
    jmax = int(math.floor(nx + 1e-12))
    total = 1.0
    term = 1.0
    for j in range(1, jmax + 1):
        term *= (nx - (j - 1)) / (n - (j - 1))
        total += term
        if term < 1e-18 * total:
            break
    return total


def _beta_table(k_unused: int, n: int) -> np.ndarray:
    """beta_n(lam1/n) for lam1 = 0..n, each row vectorized with cumprod."""
    out = np.empty(n + 1)
    out[0] = 1.0
    for lam1 in range(1, n + 1):
        if lam1 == n:
            out[lam1] = n + 1.0
            continue
        # term_j decays like (lam1/n)^j; cap j where the geometric tail
        # drops below 1e-18
        decay = -math.log(lam1 / n)
        jcap = min(lam1, int(45.0 / decay) + 2) if decay > 0 else lam1
        j = np.arange(jcap, dtype=float)
        terms = np.cumprod((lam1 - j) / (n - j))
        out[lam1] = 1.0 + terms.sum()
    return out


# ---------------------------------------------------------------------------
# the split pmf q_n
# ---------------------------------------------------------------------------

def _validate_split(k: int, n: int, lam: Sequence[int]) -> tuple:
    lam = tuple(int(v) for v in lam)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(lam) != k:
        raise ValueError(f"split vector must have length k={k}")
    if any(v < 0 for v in lam):
        raise ValueError("split entries must be nonnegative")
    if sum(lam) != n:
        raise ValueError(f"split entries must sum to n={n}, got {sum(lam)}")
    return lam


def _qn_closed(k: int, n: int, lam: tuple) -> float:
    """Closed form: Gamma-product prefactor times the inner falling-factorial sum."""
    logpref = (
        -math.log(k)
        - (k - 1) * math.lgamma(1.0 / k)
        + sum(math.lgamma(1.0 / k + v) - math.lgamma(v + 1.0) for v in lam)
        + math.lgamma(n + 1.0)
        - math.lgamma(1.0 / k + n + 1.0)
    )
    # sum_{j=1}^{lam1+1} lam1!/(lam1-j+1)! * (n-j+1)!/n!, by termwise ratios
    lam1 = lam[0]
    total = 1.0
    term = 1.0
    for j in range(1, lam1 + 1):
        term *= (lam1 - j + 1) / (n - j + 1)
        total += term
        if term < 1e-18 * total:
            break
    return math.exp(logpref) * total


def qn_pmf_factored(k: int, n: int, lam: Sequence[int]) -> float:
    """The factored form of the split pmf, built from gamma_k and beta_n."""
    lam = _validate_split(k, n, lam)
    if n < 1:
        raise ValueError("n must be >= 1")
    pref = math.exp(-math.log(k) - (k - 1) * math.lgamma(1.0 / k))
    num = math.fsum(math.log(gamma_k(k, v)) for v in lam)
    den = math.log((n + 1.0) * gamma_k(k, n + 1.0))
    return pref * math.exp(num - den) * beta_n(n, lam[0] / n)


def qn_pmf(k: int, n: int, lam: Sequence[int], *, cross_check: bool = True) -> float:
    """Probability that the first branch point of the (n+1)-step tree carries
    internal-node counts ``lam`` (an element of the integer simplex of sum n).

    By default the closed form is cross-checked against the factored form;
    the two must agree to 1e-10 relative.
    """
    lam = _validate_split(k, n, lam)
    if n < 1:
        raise ValueError("n must be >= 1")
    q = _qn_closed(k, n, lam)
    if cross_check:
        q2 = qn_pmf_factored(k, n, lam)
        if abs(q - q2) > 1e-10 * max(abs(q), abs(q2), 1e-300):
            raise ArithmeticError(
                f"split pmf forms disagree at k={k}, n={n}, lam={lam}: {q} vs {q2}"
            )
    return q


def qn_log_gamma_table(k: int, n: int) -> np.ndarray:
    """log gamma_k(v) for v = 0..n, for bulk summations over split vectors."""
    v = np.arange(n + 1, dtype=float)
    return gammaln(1.0 / k + v) - gammaln(1.0 + v)


def qn_sum_expectation(k: int, n: int, weight: Callable[..., np.ndarray]) -> float:
    """Exact sum over the whole integer simplex of q_n(lam) * weight(lam).

    ``weight`` receives k arrays (lam_1, ..., lam_k) and returns an array.
    Supported for k in {2, 3} (the grid is O(n^(k-1))).
    """
    if k not in (2, 3):
        raise ValueError("exact summation supported for k in {2, 3}")
    if n < 1:
        raise ValueError("n must be >= 1")
    lg = qn_log_gamma_table(k, n)
    beta = _beta_table(k, n)
    logpref = (
        -math.log(k)
        - (k - 1) * math.lgamma(1.0 / k)
        - math.log(n + 1.0)
        - (gammaln(1.0 / k + n + 1.0) - gammaln(n + 2.0))
    )
    total = 0.0
    if k == 2:
        lam1 = np.arange(n + 1)
        lam2 = n - lam1
        q = np.exp(logpref + lg[lam1] + lg[lam2]) * beta[lam1]
        total = float(np.sum(q * weight(lam1, lam2)))
    else:
        for l1 in range(n + 1):
            lam2 = np.arange(n - l1 + 1)
            lam3 = n - l1 - lam2
            q = np.exp(logpref + lg[l1] + lg[lam2] + lg[lam3]) * beta[l1]
            total += float(np.sum(q * weight(np.full_like(lam2, l1), lam2, lam3)))
    return total


# ---------------------------------------------------------------------------
# dislocation densities
# ---------------------------------------------------------------------------

def _check_interior(s: np.ndarray):
    if np.any(s <= 0.0) or np.any(s >= 1.0):
        raise ValueError("singular: split entries must lie strictly inside (0, 1)")


def dislocation_density(kind: str, k: int, s, kprime: int | None = None) -> float:
    """Density of the requested dislocation measure w.r.t. Lebesgue measure
    on its simplex (product of the first k-1, resp. all k', coordinates).

    Decreasing kinds require a nonincreasing vector (ties allowed).  Boundary
    inputs (an entry equal to 0 or 1, or a sub-simplex vector of full mass)
    are singular and rejected.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if k < 2:
        raise ValueError("k must be >= 2")
    a = np.asarray(s, dtype=float)
    power = -(1.0 - 1.0 / k)

    if kind in (NU_K, NU_K_DOWN):
        if a.shape != (k,):
            raise ValueError(f"expected a length-{k} simplex vector")
        if abs(a.sum() - 1.0) > _SIMPLEX_TOL:
            raise ValueError("simplex vector must sum to 1")
        _check_interior(a)
        if kind == NU_K:
            logc = -math.log(k) - (k - 1) * math.lgamma(1.0 / k)
            return math.exp(logc + power * np.log(a).sum()) / (1.0 - a[0])
        if np.any(np.diff(a) > 0):
            raise ValueError("decreasing kind requires a nonincreasing vector")
        logc = (
            math.lgamma(k)  # (k-1)!
            - math.log(k)
            - (k - 1) * math.lgamma(1.0 / k)
        )
        return math.exp(logc + power * np.log(a).sum()) * float(np.sum(1.0 / (1.0 - a)))

    if kprime is None or not (2 <= kprime < k):
        raise ValueError("sub-simplex kinds need 2 <= kprime < k")
    if a.shape != (kprime,):
        raise ValueError(f"expected a length-{kprime} sub-simplex vector")
    rest = 1.0 - a.sum()
    if rest < -_SIMPLEX_TOL:
        raise ValueError("sub-simplex vector must sum to <= 1")
    if rest <= 0.0:
        raise ValueError("singular: sub-simplex vector has full mass")
    _check_interior(a)
    logc = (
        -math.log(k)
        - (kprime - 1) * math.lgamma(1.0 / k)
        - math.lgamma(1.0 - kprime / k)
        - (kprime / k) * math.log(rest)
        + power * np.log(a).sum()
    )
    if kind == NU_KK:
        return math.exp(logc) / (1.0 - a[0])
    if np.any(np.diff(a) > 0):
        raise ValueError("decreasing kind requires a nonincreasing vector")
    return math.exp(logc + math.lgamma(kprime)) * float(np.sum(1.0 / (1.0 - a)))


def nu_poly_integral(kind: str, k: int, exponents, kprime: int | None = None) -> float:
    """Exact value of integral (1 - s_1) * prod s_i^a_i d(nu), for the
    unsorted kinds, via the Dirichlet normalization identity.

    Both nu_k and nu_{k,k'} reduce to Gamma-ratio products; this is the
    independent target used by the quadrature and split-convergence tests.
    """
    if kind == NU_K:
        a = np.asarray(exponents, dtype=float)
        if a.shape != (k,):
            raise ValueError("need one exponent per coordinate")
        logv = (
            -math.log(k)
            - (k - 1) * math.lgamma(1.0 / k)
            + float(np.sum(gammaln(a + 1.0 / k)))
            - float(gammaln(a.sum() + 1.0))
        )
        return math.exp(logv)
    if kind == NU_KK:
        if kprime is None or not (2 <= kprime < k):
            raise ValueError("nu_kk needs 2 <= kprime < k")
        a = np.asarray(exponents, dtype=float)
        if a.shape != (kprime,):
            raise ValueError("need one exponent per retained coordinate")
        logv = (
            -math.log(k)
            - (kprime - 1) * math.lgamma(1.0 / k)
            + float(np.sum(gammaln(a + 1.0 / k)))
            - float(gammaln(a.sum() + 1.0))
        )
        return math.exp(logv)
    raise ValueError("closed-form integrals available for nu_k and nu_kk only")


# ---------------------------------------------------------------------------
# Mittag-Leffler moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MLParams:
    """Parameters of a generalized Mittag-Leffler law: alpha in (0,1), theta > -alpha."""

    alpha: float
    theta: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if not (self.theta > -self.alpha):
            raise ValueError("theta must exceed -alpha")

    def moment(self, p: float) -> float:
        return ml_moment(self.alpha, self.theta, p)


def ml_moment(alpha: float, theta: float, p: float) -> float:
    """p-th moment of the (alpha, theta) generalized Mittag-Leffler law:

        Gamma(theta+1) Gamma(theta/alpha+p+1)
        -------------------------------------
        Gamma(theta/alpha+1) Gamma(theta+p*alpha+1)
    """
    MLParams(alpha, theta)  # domain check
    if p < 0:
        raise ValueError("p must be >= 0")
    return math.exp(
        math.lgamma(theta + 1.0)
        + math.lgamma(theta / alpha + p + 1.0)
        - math.lgamma(theta / alpha + 1.0)
        - math.lgamma(theta + p * alpha + 1.0)
    )


# ---------------------------------------------------------------------------
# Dirichlet sampling and simplex quadrature
# ---------------------------------------------------------------------------

def dirichlet_sample(alphas, n: int, rng: np.random.Generator) -> np.ndarray:
    """n rows from the Dirichlet law with the given parameter vector.

    Uses normalized Gamma variates (numpy's generator handles shape < 1 by
    rejection).  Rows containing an exact 0 (float underflow; a
    probability-zero event under the density) are resampled.
    """
    al = np.asarray(alphas, dtype=float)
    if np.any(al <= 0):
        raise ValueError("Dirichlet parameters must be positive")
    g = rng.gamma(shape=al, size=(n, al.size))
    bad = np.any(g == 0.0, axis=1)
    while np.any(bad):
        g[bad] = rng.gamma(shape=al, size=(int(bad.sum()), al.size))
        bad = np.any(g == 0.0, axis=1)
    return g / g.sum(axis=1, keepdims=True)


def beta_integral(alphas) -> float:
    """Exact Dirichlet normalization: integral over the simplex of
    prod s_i^(a_i - 1) ds = prod Gamma(a_i) / Gamma(sum a_i)."""
    al = np.asarray(alphas, dtype=float)
    if np.any(al <= 0):
        raise ValueError("exponent parameters must be positive")
    return math.exp(float(np.sum(gammaln(al)) - gammaln(al.sum())))


def dirichlet_beta_mc(
    alphas, proposal, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo estimate of the Dirichlet integral of prod s^(a-1) by
    importance sampling from a different Dirichlet; returns (estimate, se)."""
    al = np.asarray(alphas, dtype=float)
    pr = np.asarray(proposal, dtype=float)
    if al.shape != pr.shape:
        raise ValueError("proposal must match the target dimension")
    s = dirichlet_sample(pr, n, rng)
    logw = float(np.sum(gammaln(pr)) - gammaln(pr.sum()))
    vals = np.exp(np.sum((al - pr) * np.log(s), axis=1) + logw)
    if not np.all(np.isfinite(vals)):
        raise ValueError("unbounded integrand under the chosen proposal")
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n))
    return est, se


def _importance_values(
    kind: str, k: int, f, n: int, rng: np.random.Generator, kprime: int | None
) -> np.ndarray:
    """Per-sample values whose mean times Gamma(1/k)/k estimates
    integral f(s) (1 - s_1) d(nu)."""
    if kind in (NU_K, NU_K_DOWN):
        s = dirichlet_sample(np.full(k, 1.0 / k), n, rng)
        if kind == NU_K:
            return np.asarray(f(s), dtype=float)
        down = np.sort(s, axis=1)[:, ::-1]
        # reweight: (1 - max) / (1 - s_1) <= 1
        return np.asarray(f(down), dtype=float) * (1.0 - down[:, 0]) / (1.0 - s[:, 0])
    if kprime is None or not (2 <= kprime < k):
        raise ValueError("sub-simplex kinds need 2 <= kprime < k")
    al = np.concatenate([np.full(kprime, 1.0 / k), [1.0 - kprime / k]])
    s = dirichlet_sample(al, n, rng)[:, :kprime]
    if kind == NU_KK:
        return np.asarray(f(s), dtype=float)
    down = np.sort(s, axis=1)[:, ::-1]
    return np.asarray(f(down), dtype=float) * (1.0 - down[:, 0]) / (1.0 - s[:, 0])


def simplex_integral(
    kind: str,
    k: int,
    f: Callable[[np.ndarray], np.ndarray],
    n: int,
    rng: np.random.Generator,
    kprime: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of integral f(s) (1 - s_1) d(nu) with nu the
    requested dislocation measure; returns (estimate, standard error).

    ``f`` must be bounded on the domain and vectorized: it receives an
    (n, m) array of split vectors and returns n values.  Sampling is by
    importance from symmetric Dirichlet(1/k) (resp. its sub-simplex
    extension), under which the reweighting is exact:

        nu_k(ds) = (Gamma(1/k)/k) * (1-s_1)^(-1) * Dirichlet_{1/k}(ds),

    and the decreasing kinds are the sort-pushforwards of the unsorted ones.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if n <= 0:
        raise ValueError("sample count must be positive")
    vals = _importance_values(kind, k, f, n, rng, kprime)
    if not np.all(np.isfinite(vals)):
        raise ValueError("unbounded integrand detected")
    c = math.exp(math.lgamma(1.0 / k) - math.log(k))
    return c * float(vals.mean()), c * float(vals.std(ddof=1) / math.sqrt(n))


def laplace_exponent(
    kind: str,
    k: int,
    q: float,
    n: int,
    rng: np.random.Generator,
    kprime: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo value of phi(q) = integral (1 - sum_i s_i^(q+1)) d(nu)
    for a decreasing dislocation measure; returns (estimate, se).

    The integrand, divided by (1 - s_1), is bounded on the domain, so this
    is a direct simplex_integral call.  phi governs the tagged-point height:
    the mean height of a measure-distributed point of the limit tree is
    1/phi(1/k).
    """
    if kind not in (NU_K_DOWN, NU_KK_DOWN):
        raise ValueError("the Laplace exponent is defined for decreasing kinds")
    if q < 0:
        raise ValueError("q must be >= 0")

    def f(s):
        return (1.0 - np.sum(s ** (q + 1.0), axis=1)) / (1.0 - s[:, 0])

    return simplex_integral(kind, k, f, n, rng, kprime=kprime)


# ---------------------------------------------------------------------------
# marking kernel
# ---------------------------------------------------------------------------

def _mark_weights(s: Sequence) -> list:
    # w_j = prod_{i != j} (1 - s_i)
    k = len(s)
    return [math.prod((1 - s[i]) for i in range(k) if i != j) for j in range(k)]


def mark_pmf(s: Sequence, kprime: int) -> dict[tuple[int, ...], Fraction | float]:
    """Distribution of the k'-subset mark for a split vector s on the full
    simplex: subset {i_1 < ... < i_k'} has probability

        (k'-1)!(k-k')!/(k-1)! * (sum of its weights) / (sum of all weights),

    with weight w_j = prod_{i != j}(1 - s_i).  Keys are 1-based index
    tuples.  Exact rational arithmetic when the entries are Fractions or
    integers; floats otherwise.  Entries equal to 1 are degenerate and
    rejected.
    """
    k = len(s)
    if not (2 <= kprime < k):
        raise ValueError("need 2 <= kprime < k")
    exact = all(isinstance(v, (Fraction, int)) for v in s)
    vals = [Fraction(v) for v in s] if exact else [float(v) for v in s]
    if any(v >= 1 for v in vals):
        raise ValueError("degenerate weights: some entry equals 1")
    if any(v < 0 for v in vals):
        raise ValueError("entries must be nonnegative")
    w = _mark_weights(vals)
    wtot = sum(w)
    if exact:
        pref = Fraction(
            math.factorial(kprime - 1) * math.factorial(k - kprime),
            math.factorial(k - 1),
        )
    else:
        pref = math.factorial(kprime - 1) * math.factorial(k - kprime) / math.factorial(k - 1)
    out = {}
    for idx in combinations(range(k), kprime):
        out[tuple(i + 1 for i in idx)] = pref * sum(w[j] for j in idx) / wtot
    return out


def mark_sample(
    s: Sequence, kprime: int, rng: np.random.Generator
) -> tuple[tuple[int, ...], tuple]:
    """Draw one k'-subset from mark_pmf; returns (1-based indices, sub-vector)."""
    pmf = mark_pmf(s, kprime)
    u = rng.random()
    acc = 0.0
    items = sorted(pmf.items())
    for idx, p in items:
        acc += float(p)
        if u < acc:
            return idx, tuple(s[i - 1] for i in idx)
    idx, _ = items[-1]
    return idx, tuple(s[i - 1] for i in idx)


def mark_expectation_values(
    k: int, kprime: int, s: np.ndarray, g: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """E over the mark of (1 - s*_1) g(s*) for each decreasing row of s,
    evaluated by enumerating all k'-subsets (vectorized across rows).

    Rows must be nonincreasing so that every marked sub-vector is already
    decreasing.
    """
    n = s.shape[0]
    one_minus = 1.0 - s
    prod_all = np.prod(one_minus, axis=1)
    w = prod_all[:, None] / one_minus  # w_j = prod_{i != j}(1 - s_i)
    wtot = w.sum(axis=1)
    pref = math.factorial(kprime - 1) * math.factorial(k - kprime) / math.factorial(k - 1)
    out = np.zeros(n)
    for idx in combinations(range(k), kprime):
        cols = list(idx)
        prob = pref * w[:, cols].sum(axis=1) / wtot
        sub = s[:, cols]
        out += prob * (1.0 - sub[:, 0]) * np.asarray(g(sub), dtype=float)
    return out
