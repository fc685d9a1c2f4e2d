"""Closed forms for the coupled persistence problem.

Everything here is exact arithmetic on model parameters: the single-host
eigenvalue and its Gaussian ground mode, pairwise host overlaps, the
host-interaction matrix and its top eigenvalue, first-order behaviour of
the principal eigenvalue in the migration rate, the strong-migration
limit, and a priori bounds.  No grids, no solvers.

Host indices are 1-based throughout, matching the usual numbering of
patches O_1..O_H.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TOL_BOUNDARY = 1e-9


@dataclass(frozen=True)
class FitnessLandscape:
    """Quadratic (isotropic) fitness peaks: r_i(x) = r_max - alpha*|x - O_i|^2 / 2."""

    alpha: float
    r_max: float
    optima: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"selection strength alpha must be positive, got {self.alpha}")
        if not math.isfinite(self.r_max):
            raise ValueError(f"maximal fitness must be finite, got {self.r_max}")
        if len(self.optima) == 0:
            raise ValueError("need at least one host optimum")
        opts = tuple(tuple(float(c) for c in o) for o in self.optima)
        n = len(opts[0])
        if n not in (1, 2, 3):
            raise ValueError(f"phenotype dimension must be 1, 2 or 3, got {n}")
        if any(len(o) != n for o in opts):
            raise ValueError("all host optima must share one phenotype dimension")
        if not all(math.isfinite(c) for o in opts for c in o):
            raise ValueError("host optima must be finite")
        object.__setattr__(self, "optima", opts)

    @property
    def n(self) -> int:
        return len(self.optima[0])

    @property
    def hosts(self) -> int:
        return len(self.optima)

    def optimum(self, i: int) -> np.ndarray:
        """Optimum of host i (1-based)."""
        if not 1 <= i <= self.hosts:
            raise ValueError(f"host index {i} outside 1..{self.hosts}")
        return np.array(self.optima[i - 1])


@dataclass(frozen=True)
class ModelParams:
    """Landscape plus mutation scale mu and migration rate delta."""

    landscape: FitnessLandscape
    mu: float
    delta: float

    def __post_init__(self) -> None:
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mutation scale mu must be positive, got {self.mu}")
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValueError(f"migration rate delta must be nonnegative, got {self.delta}")


@dataclass(frozen=True)
class InteractionMatrix:
    """Symmetric host-overlap matrix with unit diagonal and its top eigenvalue."""

    matrix: np.ndarray
    top_eigenvalue: float


@dataclass(frozen=True)
class LambdaBounds:
    """Sandwich for the coupled eigenvalue: lower <= lambda_H <= upper <= crude_upper."""

    lower: float
    upper: float
    crude_upper: float


def symmetric_pair(alpha: float, r_max: float, beta: float, n: int = 2,
                   extra: tuple[tuple[float, ...], ...] = ()) -> FitnessLandscape:
    """Hosts at (-beta, 0, ...) and (beta, 0, ...), plus optional extra optima."""
    if beta < 0:
        raise ValueError(f"half-spacing beta must be nonnegative, got {beta}")
    o1 = (-float(beta),) + (0.0,) * (n - 1)
    o2 = (float(beta),) + (0.0,) * (n - 1)
    return FitnessLandscape(alpha=alpha, r_max=r_max, optima=(o1, o2) + tuple(extra))


def habitat_difference(landscape: FitnessLandscape) -> float:
    """Half squared distance between the first two host optima."""
    if landscape.hosts < 2:
        raise ValueError("habitat difference needs at least two hosts")
    d = landscape.optimum(1) - landscape.optimum(2)
    return 0.5 * float(d @ d)


def fitness(landscape: FitnessLandscape, i: int, x) -> np.ndarray | float:
    """r_i(x) for host i (1-based); x is a point or an array of points (..., n)."""
    xi = np.asarray(x, dtype=np.float64)
    scalar = xi.ndim <= 1
    pts = np.atleast_2d(xi)
    if pts.shape[-1] != landscape.n:
        raise ValueError(f"points must have {landscape.n} coordinates, got {pts.shape[-1]}")
    d = pts - landscape.optimum(i)
    r = landscape.r_max - 0.5 * landscape.alpha * np.einsum("...k,...k->...", d, d)
    return float(r[0]) if scalar else r


def lambda1(alpha: float, mu: float, n: int, r_max: float) -> float:
    """Single-host principal eigenvalue: mu*n*sqrt(alpha)/2 - r_max."""
    return 0.5 * mu * n * math.sqrt(alpha) - r_max


def gaussian_mode(alpha: float, mu: float, n: int):
    """Normalized single-host ground mode as a callable on points (..., n).

    G(y) = (sqrt(alpha)/(pi*mu))**(n/4) * exp(-sqrt(alpha)*|y|^2/(2*mu)),
    with integral of G^2 equal to one.
    """
    c = (math.sqrt(alpha) / (math.pi * mu)) ** (n / 4.0)
    rate = math.sqrt(alpha) / (2.0 * mu)

    def mode(y):
        pts = np.asarray(y, dtype=np.float64)
        if pts.ndim == 1 and n == 1:
            pts = pts[:, None]
        sq = np.einsum("...k,...k->...", pts, pts)
        return c * np.exp(-rate * sq)

    return mode


def gaussian_overlap(params: ModelParams, i: int, j: int) -> float:
    """Overlap a_ij = exp(-sqrt(alpha)*|O_i-O_j|^2/(4*mu)) of hosts i and j."""
    ls = params.landscape
    d = ls.optimum(i) - ls.optimum(j)
    return math.exp(-math.sqrt(ls.alpha) * float(d @ d) / (4.0 * params.mu))


def interaction_matrix(params: ModelParams) -> InteractionMatrix:
    """Matrix A = (a_ij) of pairwise overlaps, unit diagonal, plus its top eigenvalue."""
    h = params.landscape.hosts
    a = np.eye(h)
    for i in range(1, h + 1):
        for j in range(i + 1, h + 1):
            a[i - 1, j - 1] = a[j - 1, i - 1] = gaussian_overlap(params, i, j)
    top = float(np.linalg.eigvalsh(a)[-1])
    return InteractionMatrix(matrix=a, top_eigenvalue=top)


def cubic_top_eigenvalue(a12: float, a13: float, a23: float) -> float:
    """Top eigenvalue of a 3x3 unit-diagonal symmetric matrix by the trigonometric cubic formula.

    Independent route to ``interaction_matrix(...).top_eigenvalue`` for three hosts:
    1 + 2*sqrt(p/3)*cos(arccos(q*sqrt(27)/(2*p**1.5))/3) with p the sum of
    squared off-diagonal entries and q twice their product.
    """
    p = a12 * a12 + a13 * a13 + a23 * a23
    if p == 0.0:
        return 1.0
    q = 2.0 * a12 * a13 * a23
    arg = q * math.sqrt(27.0) / (2.0 * p**1.5)
    arg = min(1.0, max(-1.0, arg))
    return 1.0 + 2.0 * math.sqrt(p / 3.0) * math.cos(math.acos(arg) / 3.0)


def lambda_prime_at_zero(params: ModelParams) -> float:
    """Slope of the principal eigenvalue in delta at delta = 0: (H - mu_A)/(H - 1).

    Scaled by delta, this is the first-order correction
    lambda_H(delta) = lambda1 + delta*(H - mu_A)/(H - 1) + o(delta).
    """
    h = params.landscape.hosts
    if h < 2:
        raise ValueError("the migration slope needs at least two hosts")
    mu_a = interaction_matrix(params).top_eigenvalue
    return (h - mu_a) / (h - 1)


def small_delta_index(o3, beta: float, alpha: float, mu: float) -> float:
    """Index k(O_3) deciding whether a weakly-coupled third host lowers the eigenvalue.

    For hosts at (-beta, 0, ...), (beta, 0, ...) and O_3, the third host
    improves persistence at first order in delta exactly when k > 1.
    k tends to 1/2 far away and equals 1 when the three optima form an
    equilateral triangle.  Computed in log space so large exponents are safe.
    """
    if beta < 0:
        raise ValueError(f"half-spacing beta must be nonnegative, got {beta}")
    o = np.atleast_1d(np.asarray(o3, dtype=np.float64))
    sa = math.sqrt(alpha)
    ell = sa * (3.0 * beta**2 - float(o @ o)) / (2.0 * mu)  # log of the pair-vs-third weight
    c = sa * abs(float(o[0])) * beta / mu
    # log g^2 where g^2 = (1 + exp(ell+c) + exp(ell-c)) / 3
    m = max(0.0, ell + c, ell - c)
    log_g2 = m + math.log(math.exp(-m) + math.exp(ell + c - m) + math.exp(ell - c - m)) - math.log(3.0)
    t = math.exp(min(ell - 1.5 * log_g2, 0.0))
    t = min(1.0, max(-1.0, t))
    if 0.5 * log_g2 > 700.0:  # cos factor is in [1/2, 1]; the index overflows
        return math.inf
    return math.exp(0.5 * log_g2) * math.cos(math.acos(t) / 3.0)


def _classify(signed_margin: float, tol: float) -> str:
    if signed_margin > tol:
        return "inside"
    if signed_margin < -tol:
        return "outside"
    return "boundary"


def in_small_delta_region(o3, beta: float, alpha: float, mu: float,
                          tol_boundary: float = TOL_BOUNDARY) -> str:
    """Classify O_3 against the weak-migration improvement region (k > 1)."""
    return _classify(small_delta_index(o3, beta, alpha, mu) - 1.0, tol_boundary)


def lambda_infinity(params: ModelParams) -> float:
    """Strong-migration limit: lambda1 + alpha/(2H) * sum_i |O_i - centroid|^2."""
    ls = params.landscape
    opts = np.array(ls.optima)
    centroid = opts.mean(axis=0)
    spread = float(((opts - centroid) ** 2).sum())
    return lambda1(ls.alpha, params.mu, ls.n, ls.r_max) + ls.alpha * spread / (2.0 * ls.hosts)


def in_lambda_infinity_ball(o3, beta: float, tol_boundary: float = TOL_BOUNDARY) -> str:
    """Strong-migration improvement region for a third host next to the pair at +-beta.

    The third host lowers the strong-migration eigenvalue exactly when it
    lies in the open ball of radius sqrt(3/2)*beta around the pair midpoint.
    """
    o = np.atleast_1d(np.asarray(o3, dtype=np.float64))
    return _classify(math.sqrt(1.5) * beta - float(np.linalg.norm(o)), tol_boundary)


def in_fourhost_infinity_ball(o4, beta: float, tol_boundary: float = TOL_BOUNDARY) -> str:
    """Strong-migration improvement region for a fourth host.

    Configuration: pair at +-beta plus a third host at the midpoint; the
    fourth host helps in the strong-migration limit exactly inside the
    ball of radius sqrt(8/9)*beta around the midpoint.
    """
    o = np.atleast_1d(np.asarray(o4, dtype=np.float64))
    return _classify(math.sqrt(8.0 / 9.0) * beta - float(np.linalg.norm(o)), tol_boundary)


def lambda_bounds(params: ModelParams) -> LambdaBounds:
    """Sandwich lambda1 <= lambda_H <= lambda1 + delta*(1 - mean overlap) <= lambda1 + delta."""
    ls = params.landscape
    lam1 = lambda1(ls.alpha, params.mu, ls.n, ls.r_max)
    h = ls.hosts
    if h == 1:
        return LambdaBounds(lower=lam1, upper=lam1, crude_upper=lam1)
    pair_sum = sum(
        gaussian_overlap(params, i, j) for i in range(1, h + 1) for j in range(i + 1, h + 1)
    )
    upper = lam1 + params.delta * (1.0 - 2.0 * pair_sum / (h * (h - 1)))
    return LambdaBounds(lower=lam1, upper=upper, crude_upper=lam1 + params.delta)
