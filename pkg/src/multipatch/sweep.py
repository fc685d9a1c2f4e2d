"""Parameter-space sweeps: third-host region maps, migration-rate ladders,
far-field and midpoint comparisons, and the best-placement line search.

All sweeps solve on one shared grid per study so that differences of
eigenvalues (the quantities of interest) cancel the leading discretization
bias.  Grid points of a region map are independent eigenproblems; they can
be evaluated by a worker pool, and results are reduced in a fixed row order
so the output never depends on scheduling.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import dataclass

import numpy as np

from .analytics import (
    FitnessLandscape,
    ModelParams,
    in_lambda_infinity_ball,
    in_small_delta_region,
    lambda1,
    lambda_infinity,
    lambda_prime_at_zero,
    symmetric_pair,
)
from .domain import DiscreteDomain, build_domain
from .eigen import CoupledOperator, _auto_m, _auto_radius, principal_eigenpair
from .errors import AcceptanceError, ConfigError, SolverError

__all__ = [
    "SweepSpec",
    "RegionMap",
    "region_map",
    "write_region_csv",
    "DeltaSweep",
    "delta_sweep",
    "FarFieldTable",
    "far_field_check",
    "MiddleCopyTable",
    "middle_vs_copy",
    "BestThird",
    "best_third_optimum",
]


@dataclass(frozen=True)
class SweepSpec:
    """Region-map configuration: fixed host pair plus a rectangle of
    candidate third-host optima.

    Defaults match the standard two-dimensional setup (mu^2/2 = alpha = 1)
    with a [-3.5, 3.5]^2 candidate rectangle.  ``accuracy`` is the residual
    tolerance of each per-point eigensolve; the shared pair eigenvalue is
    solved 10x tighter.  ``radius``/``m`` override the automatic common
    grid.
    """

    alpha: float = 1.0
    mu: float = math.sqrt(2.0)
    delta: float = 1.0
    r_max: float = 1.0
    beta: float = 1.0
    x1_range: tuple[float, float] = (-3.5, 3.5)
    x2_range: tuple[float, float] = (-3.5, 3.5)
    resolution: int = 71
    accuracy: float = 1e-6
    workers: int = 1
    radius: float | None = None
    m: int | None = None

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.mu > 0):
            raise ConfigError("alpha and mu must be positive")
        if self.delta < 0:
            raise ConfigError(f"migration rate delta must be >= 0, got {self.delta}")
        if self.beta < 0:
            raise ConfigError(f"half-spacing beta must be >= 0, got {self.beta}")
        for name, rng in (("x1_range", self.x1_range), ("x2_range", self.x2_range)):
            if len(rng) != 2 or not rng[0] < rng[1]:
                raise ConfigError(f"{name} must be (lo, hi) with lo < hi, got {rng}")
        if self.resolution < 2:
            raise ConfigError("resolution must be at least 2 points per axis")
        if self.accuracy <= 0:
            raise ConfigError("accuracy must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.m is not None and self.m < 2:
            raise ConfigError("grid override m must be at least 2")
        if self.radius is not None and self.radius <= 0:
            raise ConfigError("radius override must be positive")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        a1 = np.linspace(self.x1_range[0], self.x1_range[1], self.resolution)
        a2 = np.linspace(self.x2_range[0], self.x2_range[1], self.resolution)
        return a1, a2


@dataclass
class RegionMap:
    """Per-point third-host eigenvalues against the shared pair eigenvalue.

    ``gain = lambda2 - lambda3``; positive gain means the third host helps.
    ``in_region_delta`` flags gain beyond the solver tolerance,
    ``in_region_P`` the weak-migration predicate, ``in_region_inf`` the
    strong-migration ball.  Arrays are indexed [i1, i2] matching
    ``a1[i1], a2[i2]``; rows() iterates with a1 as the major key.
    """

    spec: SweepSpec
    a1: np.ndarray
    a2: np.ndarray
    lambda2: float
    lambda3: np.ndarray
    gain: np.ndarray
    in_region_delta: np.ndarray
    in_region_P: np.ndarray
    in_region_inf: np.ndarray
    radius: float
    m: int

    def rows(self):
        for i1 in range(self.a1.size):
            for i2 in range(self.a2.size):
                yield (
                    float(self.a1[i1]),
                    float(self.a2[i2]),
                    self.lambda2,
                    float(self.lambda3[i1, i2]),
                    float(self.gain[i1, i2]),
                    int(self.in_region_delta[i1, i2]),
                    int(self.in_region_P[i1, i2]),
                    int(self.in_region_inf[i1, i2]),
                )


def _pair_params(alpha: float, mu: float, delta: float, r_max: float,
                 beta: float, extra: tuple[tuple[float, ...], ...] = ()) -> ModelParams:
    return ModelParams(symmetric_pair(alpha, r_max, beta, n=2, extra=extra), mu, delta)


def _gaussian_guess(params: ModelParams, dom: DiscreteDomain) -> np.ndarray:
    """Stack of decoupled ground modes, one bump per host (warm start)."""
    ls = params.landscape
    ax = dom.axis()
    sq = math.sqrt(ls.alpha) / (2.0 * params.mu)
    out = np.empty((ls.hosts, dom.size))
    for i in range(1, ls.hosts + 1):
        oi = ls.optimum(i)
        g = np.exp(-sq * (ax - oi[0]) ** 2)
        for d in range(1, dom.n):
            g = np.multiply.outer(g, np.exp(-sq * (ax - oi[d]) ** 2))
        out[i - 1] = g.reshape(-1)
    return out


class _MapSolver:
    """Shared state for one region map: common grid, cached axis bases,
    and the per-point third-host eigensolve."""

    def __init__(self, spec: SweepSpec) -> None:
        self.spec = spec
        corner = (
            max(abs(spec.x1_range[0]), abs(spec.x1_range[1])),
            max(abs(spec.x2_range[0]), abs(spec.x2_range[1])),
        )
        probe = _pair_params(spec.alpha, spec.mu, spec.delta, spec.r_max,
                             spec.beta, extra=(corner,))
        radius = spec.radius if spec.radius is not None else _auto_radius(probe)
        m = spec.m if spec.m is not None else _auto_m(probe, radius)
        self.domain = build_domain(2, radius, m)
        self.axis_cache: dict = {}

    def lambda3(self, a1: float, a2: float) -> float:
        spec = self.spec
        params = _pair_params(spec.alpha, spec.mu, spec.delta, spec.r_max,
                              spec.beta, extra=((float(a1), float(a2)),))
        op = CoupledOperator(params=params, domain=self.domain,
                             axis_cache=self.axis_cache)
        guess = _gaussian_guess(params, self.domain)
        try:
            res = principal_eigenpair(op, tol=spec.accuracy, x0=guess)
        except SolverError as exc:
            raise SolverError(
                f"third-host grid point ({a1:.17g}, {a2:.17g}): {exc}") from exc
        return res.value

    def lambda2(self) -> float:
        spec = self.spec
        params = _pair_params(spec.alpha, spec.mu, spec.delta, spec.r_max, spec.beta)
        op = CoupledOperator(params=params, domain=self.domain,
                             axis_cache=self.axis_cache)
        res = principal_eigenpair(op, tol=spec.accuracy / 10.0,
                                  x0=_gaussian_guess(params, self.domain))
        return res.value


_WORKER_SOLVER: _MapSolver | None = None
_WORKER_POINTS: list[tuple[float, float]] | None = None


def _worker_init(spec: SweepSpec) -> None:
    global _WORKER_SOLVER, _WORKER_POINTS
    _WORKER_SOLVER = _MapSolver(spec)
    a1, a2 = spec.axes()
    _WORKER_POINTS = [(float(u), float(v)) for u in a1 for v in a2]


def _worker_point(k: int) -> float:
    assert _WORKER_SOLVER is not None and _WORKER_POINTS is not None
    u, v = _WORKER_POINTS[k]
    return _WORKER_SOLVER.lambda3(u, v)


def region_map(spec: SweepSpec) -> RegionMap:
    """Map the persistence gain of a third host over the candidate grid.

    One pair eigensolve (10x tighter) is shared by all grid points; each
    point then costs one three-host eigensolve on the common grid.  Points
    are independent, so ``spec.workers`` > 1 distributes them over a
    process pool; every point starts from the same analytic guess, which
    keeps the result identical for any worker count.
    """
    solver = _MapSolver(spec)
    lam2 = solver.lambda2()
    a1, a2 = spec.axes()
    K1, K2 = a1.size, a2.size
    if spec.workers == 1:
        flat = [solver.lambda3(float(u), float(v)) for u in a1 for v in a2]
    else:
        if "fork" in mp.get_all_start_methods():
            ctx = mp.get_context("fork")
        else:
            ctx = mp.get_context("spawn")
        chunk = max(1, (K1 * K2 + 8 * spec.workers - 1) // (8 * spec.workers))
        with ctx.Pool(spec.workers, initializer=_worker_init,
                      initargs=(spec,)) as pool:
            flat = pool.map(_worker_point, range(K1 * K2), chunksize=chunk)
    lam3 = np.array(flat, dtype=np.float64).reshape(K1, K2)
    gain = lam2 - lam3
    in_delta = gain > spec.accuracy
    in_p = np.empty((K1, K2), dtype=bool)
    in_inf = np.empty((K1, K2), dtype=bool)
    for i1, u in enumerate(a1):
        for i2, v in enumerate(a2):
            o3 = (float(u), float(v))
            in_p[i1, i2] = in_small_delta_region(
                o3, spec.beta, spec.alpha, spec.mu) == "inside"
            in_inf[i1, i2] = in_lambda_infinity_ball(o3, spec.beta) == "inside"
    return RegionMap(spec=spec, a1=a1, a2=a2, lambda2=lam2, lambda3=lam3,
                     gain=gain, in_region_delta=in_delta, in_region_P=in_p,
                     in_region_inf=in_inf, radius=solver.domain.radius,
                     m=solver.domain.m)


def _metadata_lines(extra: dict) -> list[str]:
    import platform

    import scipy

    from . import __version__
    from ._kernels import BACKEND

    lines = {
        "multipatch": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernels": BACKEND,
    }
    lines.update(extra)
    return [f"{k}={v}" for k, v in lines.items()]


def _fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def write_region_csv(rm: RegionMap, path, metadata_path=None) -> None:
    """Write one row per grid point plus a parameter-echo header line.

    A companion metadata file (default: path + '.meta') records solver
    settings and library versions.  Output contains no timestamps, so
    identical runs produce identical bytes.
    """
    spec = rm.spec
    echo = (
        f"# alpha={spec.alpha:.17g} mu={spec.mu:.17g} delta={spec.delta:.17g}"
        f" r_max={spec.r_max:.17g} beta={spec.beta:.17g}"
        f" x1=[{spec.x1_range[0]:.17g},{spec.x1_range[1]:.17g}]"
        f" x2=[{spec.x2_range[0]:.17g},{spec.x2_range[1]:.17g}]"
        f" resolution={spec.resolution} accuracy={spec.accuracy:.17g}"
        f" radius={rm.radius:.17g} m={rm.m} lambda2={rm.lambda2:.17g}"
    )
    header = "a1,a2,lambda2,lambda3,gain,in_region_delta,in_region_P,in_region_inf"
    with open(path, "w") as fh:
        fh.write(echo + "\n" + header + "\n")
        for row in rm.rows():
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    meta = str(path) + ".meta" if metadata_path is None else metadata_path
    settings = {
        "accuracy": f"{spec.accuracy:.17g}",
        "pair_accuracy": f"{spec.accuracy / 10.0:.17g}",
        "radius": f"{rm.radius:.17g}",
        "m": str(rm.m),
        "resolution": str(spec.resolution),
    }
    with open(meta, "w") as fh:
        fh.write("\n".join(_metadata_lines(settings)) + "\n")


# ---------------------------------------------------------------------------
# migration-rate ladder


@dataclass
class DeltaSweep:
    """Eigenvalues along a migration-rate ladder with analytic reference
    values: the zero-migration eigenvalue, the weak-migration slope, and
    the strong-migration limit."""

    landscape: FitnessLandscape
    mu: float
    deltas: np.ndarray
    values: np.ndarray
    lambda_one: float
    slope_zero: float
    lambda_inf: float
    radius: float
    m: int

    def rows(self):
        for d, v in zip(self.deltas, self.values):
            yield float(d), float(v)


def delta_sweep(landscape: FitnessLandscape, mu: float, delta_list,
                accuracy: float = 1e-3, radius: float | None = None,
                m: int | None = None) -> DeltaSweep:
    """Solve the coupled eigenvalue for each migration rate in the list.

    All rates share one grid, calibrated so the zero-migration solve
    reproduces the known decoupled eigenvalue within accuracy/3; on a
    common grid the exact nondecreasing-in-delta property carries over to
    the discrete values.  Rates must be sorted ascending.
    """
    deltas = np.asarray(delta_list, dtype=np.float64)
    if deltas.size == 0:
        raise ConfigError("delta_list must not be empty")
    if np.any(deltas < 0):
        raise ConfigError("migration rates must be nonnegative")
    if np.any(np.diff(deltas) < 0):
        raise ConfigError("delta_list must be sorted ascending")
    if accuracy <= 0:
        raise ConfigError("accuracy must be positive")
    probe = ModelParams(landscape, mu, float(deltas[-1]))
    R = radius if radius is not None else _auto_radius(probe)
    m_run = m if m is not None else _auto_m(probe, R)
    lam_one = lambda1(landscape.alpha, mu, landscape.n, landscape.r_max)
    tol = max(1e-11, min(1e-7, accuracy * 1e-2))

    # Calibrate the shared grid against the exact zero-migration value.
    while True:
        dom = build_domain(landscape.n, R, m_run)
        p0 = ModelParams(landscape, mu, 0.0)
        r0 = principal_eigenpair(CoupledOperator(params=p0, domain=dom),
                                 tol=tol, x0=_gaussian_guess(p0, dom))
        if abs(r0.value - lam_one) <= accuracy / 3.0:
            break
        if (2 * m_run + 1) ** landscape.n > 4_000_000:
            raise SolverError(
                f"grid calibration for accuracy {accuracy:g} exceeds the "
                f"node budget at m={m_run}; "
                f"zero-migration error {abs(r0.value - lam_one):.3e}")
        m_run = 2 * m_run + 1

    values = np.empty(deltas.size)
    warm = None
    for k, d in enumerate(deltas):
        params = ModelParams(landscape, mu, float(d))
        op = CoupledOperator(params=params, domain=dom)
        x0 = warm if warm is not None else _gaussian_guess(params, dom)
        res = principal_eigenpair(op, tol=tol, x0=x0)
        values[k] = res.value
        warm = np.stack([f.values for f in res.fields])

    if landscape.hosts >= 2:
        slope = lambda_prime_at_zero(ModelParams(landscape, mu, 1.0))
    else:
        slope = 0.0
    lam_inf = lambda_infinity(ModelParams(landscape, mu, 1.0))
    return DeltaSweep(landscape=landscape, mu=mu, deltas=deltas, values=values,
                      lambda_one=lam_one, slope_zero=slope, lambda_inf=lam_inf,
                      radius=R, m=m_run)


# ---------------------------------------------------------------------------
# far-away third host


@dataclass
class FarFieldTable:
    """Third host placed on the x2-axis at increasing distances, checked
    against the two-sided migration-loss bound."""

    distances: np.ndarray
    lambda3: np.ndarray
    lower: np.ndarray
    lambda_tilde2: float
    lambda2: float
    bound_applicable: bool
    radius: float
    m: int

    def rows(self):
        for d, v, lo in zip(self.distances, self.lambda3, self.lower):
            yield float(d), float(v), float(lo), self.lambda_tilde2


def far_field_check(beta: float, alpha: float, mu: float, delta: float,
                    r_max: float, distances, accuracy: float = 1e-5,
                    radius: float | None = None,
                    m: int | None = None) -> FarFieldTable:
    """Eigenvalues for a remote third host against the loss-pair bracket.

    For each distance d the third optimum sits at (0, d).  The migration-
    loss pair eigenvalue bounds every three-host value from above; the
    matching lower bound decays like 1/d.  Both inequalities are asserted
    (with slack at the solver residual level) unless the lower bound is
    inapplicable because the loss eigenvalue plus r_max is negative, which
    is reported instead.
    """
    dist = np.asarray(distances, dtype=np.float64)
    if dist.size == 0:
        raise ConfigError("distances must not be empty")
    if np.any(np.diff(dist) <= 0):
        raise ConfigError("distances must be strictly increasing")
    if np.any(dist <= 2.0 * beta):
        raise ConfigError(f"all distances must exceed 2*beta = {2 * beta:g}")
    far = float(dist[-1])
    probe = _pair_params(alpha, mu, delta, r_max, beta, extra=((0.0, far),))
    R = radius if radius is not None else _auto_radius(probe)
    m_run = m if m is not None else _auto_m(probe, R)
    dom = build_domain(2, R, m_run)
    cache: dict = {}

    pair = _pair_params(alpha, mu, delta, r_max, beta)
    loss_res = principal_eigenpair(
        CoupledOperator(params=pair, domain=dom, kind="loss", axis_cache=cache),
        tol=accuracy / 10.0, x0=_gaussian_guess(pair, dom))
    lam_t2 = loss_res.value
    pair_res = principal_eigenpair(
        CoupledOperator(params=pair, domain=dom, axis_cache=cache),
        tol=accuracy / 10.0, x0=_gaussian_guess(pair, dom))
    lam2 = pair_res.value

    applicable = lam_t2 + r_max >= 0.0
    lam3 = np.empty(dist.size)
    lower = np.full(dist.size, np.nan)
    slack = 4.0 * (accuracy + accuracy / 10.0) * (1.0 + abs(lam_t2))
    for k, d in enumerate(dist):
        params = _pair_params(alpha, mu, delta, r_max, beta,
                              extra=((0.0, float(d)),))
        op = CoupledOperator(params=params, domain=dom, axis_cache=cache)
        res = principal_eigenpair(op, tol=accuracy,
                                  x0=_gaussian_guess(params, dom))
        lam3[k] = res.value
        if lam3[k] > lam_t2 + slack:
            raise AcceptanceError(
                f"upper bound violated at distance {d:g}: "
                f"lambda3 = {lam3[k]:.12g} > loss value {lam_t2:.12g}")
        if applicable:
            min_dist = math.hypot(float(d), beta)
            lower[k] = lam_t2 - delta * math.sqrt(
                48.0 * (lam_t2 + r_max)) / (math.sqrt(alpha) * min_dist)
            if lam3[k] < lower[k] - slack:
                raise AcceptanceError(
                    f"lower bound violated at distance {d:g}: "
                    f"lambda3 = {lam3[k]:.12g} < bound {lower[k]:.12g}")
    return FarFieldTable(distances=dist, lambda3=lam3, lower=lower,
                         lambda_tilde2=lam_t2, lambda2=lam2,
                         bound_applicable=bool(applicable), radius=R, m=m_run)


# ---------------------------------------------------------------------------
# midpoint host versus duplicated host


@dataclass
class MiddleCopyTable:
    """Third host at the pair midpoint versus on top of the first host, per
    half-spacing, with distances to the respective wide-separation limits."""

    betas: np.ndarray
    lambda_mid: np.ndarray
    lambda_copy: np.ndarray
    lambda_one: float
    delta: float
    gap_mid: np.ndarray   # (lambda1 + delta) - lambda_mid
    gap_copy: np.ndarray  # lambda_copy - (lambda1 + delta/2)

    def rows(self):
        for b, lm, lc, gm, gc in zip(self.betas, self.lambda_mid,
                                     self.lambda_copy, self.gap_mid,
                                     self.gap_copy):
            yield float(b), float(lm), float(lc), float(gm), float(gc)


def middle_vs_copy(beta_list, alpha: float, mu: float, delta: float,
                   r_max: float, accuracy: float = 1e-5) -> MiddleCopyTable:
    """Compare the midpoint placement with duplicating the first host.

    For each half-spacing the two three-host eigenvalues share a grid
    sized to that spacing.  For well-separated hosts the midpoint value
    approaches lambda1 + delta and the duplicate approaches
    lambda1 + delta/2; the table reports the distance to each limit, and
    the duplicate must win (strictly smaller eigenvalue) at the largest
    spacing.
    """
    betas = np.asarray(beta_list, dtype=np.float64)
    if betas.size == 0:
        raise ConfigError("beta_list must not be empty")
    if np.any(betas < 0):
        raise ConfigError("half-spacings must be nonnegative")
    if np.any(np.diff(betas) <= 0):
        raise ConfigError("beta_list must be strictly increasing")
    lam_one = lambda1(alpha, mu, 2, r_max)
    lam_mid = np.empty(betas.size)
    lam_copy = np.empty(betas.size)
    for k, b in enumerate(betas):
        for which, o3 in (("mid", (0.0, 0.0)), ("copy", (-float(b), 0.0))):
            params = _pair_params(alpha, mu, delta, r_max, float(b), extra=(o3,))
            R = _auto_radius(params)
            dom = build_domain(2, R, _auto_m(params, R))
            res = principal_eigenpair(
                CoupledOperator(params=params, domain=dom), tol=accuracy,
                x0=_gaussian_guess(params, dom))
            if which == "mid":
                lam_mid[k] = res.value
            else:
                lam_copy[k] = res.value
    slack = 4.0 * accuracy * (1.0 + abs(lam_one) + delta)
    if lam_mid[-1] <= lam_copy[-1] + slack:
        raise AcceptanceError(
            f"expected the duplicated host to win at beta={betas[-1]:g}: "
            f"mid {lam_mid[-1]:.12g} vs copy {lam_copy[-1]:.12g}")
    return MiddleCopyTable(betas=betas, lambda_mid=lam_mid,
                           lambda_copy=lam_copy, lambda_one=lam_one,
                           delta=delta,
                           gap_mid=(lam_one + delta) - lam_mid,
                           gap_copy=lam_copy - (lam_one + 0.5 * delta))


# ---------------------------------------------------------------------------
# best third optimum on the host axis


@dataclass
class BestThird:
    """Minimizer of the three-host eigenvalue over placements on the host
    axis, with the pair eigenvalue it must beat."""

    a_star: float
    lambda3_min: float
    lambda2: float
    lambda3_copy: float
    evaluations: int
    used_fallback: bool
    note: str
    radius: float
    m: int


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def best_third_optimum(beta: float, alpha: float, mu: float, delta: float,
                       r_max: float, accuracy: float = 1e-6,
                       bracket_tol: float | None = None) -> BestThird:
    """Search the host axis for the third-host placement minimizing the
    eigenvalue.

    The candidate optimum runs over (a, 0) with a in [0, 3*beta]; mirror
    symmetry of the pair makes the negative half redundant.  A coarse scan
    first checks that the profile has a single interior valley; if so,
    golden-section search refines it, otherwise a dense grid scan is used
    and noted in the result.  The minimum must beat the two-host
    eigenvalue, which is solved 10x tighter on the same grid.
    """
    if beta <= 0:
        raise ConfigError(f"half-spacing beta must be positive, got {beta}")
    if accuracy <= 0:
        raise ConfigError("accuracy must be positive")
    hi = 3.0 * beta
    if bracket_tol is None:
        bracket_tol = max(1e-2 * beta, 1e-4)
    probe = _pair_params(alpha, mu, delta, r_max, beta, extra=((hi, 0.0),))
    R = _auto_radius(probe)
    dom = build_domain(2, R, _auto_m(probe, R))
    cache: dict = {}
    evals = 0
    seen: dict[float, float] = {}

    def f(a: float) -> float:
        nonlocal evals
        key = float(a)
        if key in seen:
            return seen[key]
        params = _pair_params(alpha, mu, delta, r_max, beta, extra=((key, 0.0),))
        op = CoupledOperator(params=params, domain=dom, axis_cache=cache)
        res = principal_eigenpair(op, tol=accuracy,
                                  x0=_gaussian_guess(params, dom))
        evals += 1
        seen[key] = res.value
        return res.value

    def golden(lo: float, up: float) -> float:
        x1 = up - _INVPHI * (up - lo)
        x2 = lo + _INVPHI * (up - lo)
        f1, f2 = f(x1), f(x2)
        while up - lo > bracket_tol:
            if f1 <= f2:
                up, x2, f2 = x2, x1, f1
                x1 = up - _INVPHI * (up - lo)
                f1 = f(x1)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + _INVPHI * (up - lo)
                f2 = f(x2)
        near = [a for a in seen if lo - bracket_tol <= a <= up + bracket_tol]
        return min(near, key=seen.get) if near else 0.5 * (lo + up)

    coarse = np.linspace(0.0, hi, 13)
    cv = np.array([f(a) for a in coarse])
    interior_minima = sum(
        1 for j in range(1, coarse.size - 1)
        if cv[j] < cv[j - 1] and cv[j] < cv[j + 1]
    )
    if interior_minima <= 1:
        used_fallback = False
        note = "single valley in coarse scan; golden-section refinement"
        j = int(np.argmin(cv))
        lo = coarse[max(0, j - 1)]
        up = coarse[min(coarse.size - 1, j + 1)]
        a_star = golden(float(lo), float(up))
    else:
        used_fallback = True
        note = (f"{interior_minima} interior valleys in coarse scan; "
                "dense grid scan instead of golden-section")
        dense = np.linspace(0.0, hi, 61)
        dv = np.array([f(a) for a in dense])
        j = int(np.argmin(dv))
        lo = dense[max(0, j - 1)]
        up = dense[min(dense.size - 1, j + 1)]
        a_star = golden(float(lo), float(up))
    lam_min = f(a_star)

    pair = _pair_params(alpha, mu, delta, r_max, beta)
    lam2 = principal_eigenpair(
        CoupledOperator(params=pair, domain=dom, axis_cache=cache),
        tol=accuracy / 10.0, x0=_gaussian_guess(pair, dom)).value
    if not lam_min < lam2:
        raise AcceptanceError(
            f"no improving placement found on the host axis: "
            f"min lambda3 = {lam_min:.12g} vs lambda2 = {lam2:.12g}")
    return BestThird(a_star=float(a_star), lambda3_min=float(lam_min),
                     lambda2=float(lam2), lambda3_copy=float(f(beta)),
                     evaluations=evals, used_fallback=used_fallback,
                     note=note, radius=R, m=dom.m)
