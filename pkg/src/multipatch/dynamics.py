"""Time integration of the nonlinear host-coupled population model.

The density u_i of the population on host i evolves by

    du_i/dt = (mu^2/2) lap(u_i) + u_i (r_i(x) - N_i(t))
              + delta (mean_{k != i} u_k - u_i),        N_i = integral of u_i,

on the same Dirichlet box grid as the eigensolver.  Stepping is IMEX:
diffusion is backward Euler (a CG solve per host and step, the diffusion
matrix is very well conditioned for sensible dt), reaction and migration
are explicit with the masses frozen at the step start.  Negative values
produced by the explicit part are clipped to zero and counted; a healthy
run clips nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .analytics import ModelParams
from .domain import DiscreteDomain, Field
from .eigen import EigenResult, _potential_grids
from .errors import SolverError


class StabilityError(SolverError):
    """The explicit part of the step violates the stability cap."""


@dataclass
class SimState:
    """Host densities at one time: stacked (H, N) float64 values."""

    params: ModelParams
    domain: DiscreteDomain
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        h = self.params.landscape.hosts
        expect = (h, self.domain.size)
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        if self.u.shape != expect:
            raise ValueError(f"state must have shape {expect}, got {self.u.shape}")
        if self.params.landscape.n != self.domain.n:
            raise ValueError("landscape and domain dimensions differ")

    def masses(self) -> np.ndarray:
        """Per-host masses N_i (quadrature)."""
        return self.domain.cell_volume() * self.u.sum(axis=1)

    def fields(self) -> list[Field]:
        return [Field(self.domain, self.u[i].copy()) for i in range(self.u.shape[0])]


def initial_gaussian(params: ModelParams, dom: DiscreteDomain, center=None,
                     width: float = 1.0, mass: float | list[float] = 1.0) -> SimState:
    """Same Gaussian bump on every host, discretely normalized to ``mass``.

    ``mass`` may be a per-host list; a zero entry leaves that host empty.
    """
    h = params.landscape.hosts
    if width <= 0:
        raise ValueError(f"bump width must be positive, got {width}")
    c = np.zeros(dom.n) if center is None else np.asarray(center, dtype=np.float64)
    if c.shape != (dom.n,):
        raise ValueError(f"center must have {dom.n} coordinates")
    pts = dom.nodes()
    d2 = ((pts - c) ** 2).sum(axis=1)
    bump = np.exp(-d2 / (2.0 * width**2))
    total = dom.cell_volume() * float(bump.sum())
    if total <= 0.0:
        raise ValueError("initial bump vanishes on this grid; widen it or refine the grid")
    masses = np.broadcast_to(np.asarray(mass, dtype=np.float64), (h,))
    if np.any(masses < 0):
        raise ValueError("initial masses must be nonnegative")
    u = np.ascontiguousarray(masses[:, None] * (bump / total)[None, :])
    return SimState(params=params, domain=dom, u=u)


def initial_indicator(params: ModelParams, dom: DiscreteDomain, lower, upper,
                      height: float = 1.0) -> SimState:
    """Indicator of the box [lower, upper] at the given height, on every host."""
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    if lo.shape != (dom.n,) or hi.shape != (dom.n,):
        raise ValueError(f"box corners must have {dom.n} coordinates")
    if np.any(lo >= hi):
        raise ValueError("box corners must satisfy lower < upper componentwise")
    if height <= 0:
        raise ValueError(f"indicator height must be positive, got {height}")
    pts = dom.nodes()
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    if not inside.any():
        raise ValueError("indicator box contains no grid nodes")
    hh = params.landscape.hosts
    u = np.ascontiguousarray(np.tile(height * inside.astype(np.float64), (hh, 1)))
    return SimState(params=params, domain=dom, u=u)


def initial_from_fields(params: ModelParams, fields: list[Field], t: float = 0.0) -> SimState:
    """State from explicit per-host fields (all on one domain, nonnegative)."""
    if len(fields) != params.landscape.hosts:
        raise ValueError(
            f"need {params.landscape.hosts} fields, got {len(fields)}"
        )
    dom = fields[0].domain
    if any(f.domain != dom for f in fields):
        raise ValueError("all fields must share one domain")
    u = np.stack([f.values for f in fields])
    if float(u.min()) < 0.0:
        raise ValueError("initial densities must be nonnegative")
    return SimState(params=params, domain=dom, u=u, t=t)


def initial_condition(params: ModelParams, dom: DiscreteDomain, kind: str, **kw) -> SimState:
    """Dispatch on ``kind``: gaussian_at, indicator_box, or from_fields."""
    builders = {
        "gaussian_at": initial_gaussian,
        "indicator_box": initial_indicator,
        "from_fields": lambda params, dom, **k: initial_from_fields(params, **k),
    }
    if kind not in builders:
        raise ValueError(f"unknown initial condition kind {kind!r}; use one of {sorted(builders)}")
    return builders[kind](params, dom, **kw)


def suggested_dt(params: ModelParams, dom: DiscreteDomain,
                 mass_scale: float | None = None) -> float:
    """A dt that keeps the explicit part both stable and positivity-preserving.

    The stability cap needs dt*(r_max + delta + max N_i) <= 0.5; keeping
    the update of every node nonnegative (so nothing is clipped) further
    needs dt*(|min r| + delta + max N_i) <= 1, and the minimum of r is
    attained at a box corner.  ``mass_scale`` bounds the masses along the
    run; by default the logistic plateau max(r_max, 1) is used.
    """
    ls = params.landscape
    corner = np.full(dom.n, dom.radius)
    r_min = min(
        ls.r_max - 0.5 * ls.alpha * float(((corner + np.abs(o)) ** 2).sum())
        for o in np.asarray(ls.optima)
    )
    n_cap = mass_scale if mass_scale is not None else max(ls.r_max, 1.0)
    stab = 0.5 / max(max(ls.r_max, 0.0) + params.delta + n_cap, 1e-12)
    posi = 1.0 / max(abs(r_min) + params.delta + n_cap, 1e-12)
    return 0.9 * min(stab, posi)


class _StepContext:
    """Cached grid data for repeated stepping."""

    def __init__(self, params: ModelParams, dom: DiscreteDomain) -> None:
        self.params = params
        self.dom = dom
        self.r = _potential_grids(params, dom)  # (H, N)
        self.nu = 0.5 * params.mu**2
        h = params.landscape.hosts
        self.coup = params.delta / (h - 1) if h > 1 else 0.0
        self.ones = np.ones_like(self.r)
        self.vol = dom.cell_volume()
        self.inv_h2 = 1.0 / dom.h**2

    def advance(self, u: np.ndarray, dt: float, rtol_cg: float):
        """One IMEX step; returns (u_next, clipped_nodes, clipped_mass)."""
        p = self.params
        masses = self.vol * u.sum(axis=1)
        cap = dt * (max(p.landscape.r_max, 0.0) + p.delta + float(masses.max()))
        if cap > 0.5:
            raise StabilityError(
                f"dt={dt} violates the stability cap: dt*(r_max + delta + max N_i) = "
                f"{cap:.3f} > 0.5; reduce dt"
            )
        v = u + dt * (u * (self.r - masses[:, None]))
        if self.coup != 0.0:
            # delta*(mean_{k != i} u_k - u_i) = coup*(S - u_i) - delta*u_i
            v += (dt * self.coup) * (u.sum(axis=0)[None, :] - u)
            v -= (dt * p.delta) * u
        neg = v < 0.0
        clipped_nodes = int(neg.sum())
        clipped_mass = -self.vol * float(v[neg].sum()) if clipped_nodes else 0.0
        if clipped_nodes:
            v[neg] = 0.0
        out, _, relres, ok = _kernels.cg_jacobi(
            v, self.ones, 0.0, dt * self.nu, self.dom.dims, self.inv_h2,
            rtol_cg, 500, None,
        )
        if not ok:
            raise SolverError(f"diffusion solve stalled at relative residual {relres:.2e}")
        # The exact diffusion inverse preserves positivity; anything negative
        # here is solver noise in the far tails.  Zero it and track it apart
        # from the explicit clips, which are the scheme-meaningful events.
        neg = out < 0.0
        floor_nodes = int(neg.sum())
        floor_mass = -self.vol * float(out[neg].sum()) if floor_nodes else 0.0
        if floor_nodes:
            out[neg] = 0.0
        return out, clipped_nodes, clipped_mass, floor_nodes, floor_mass


def step(state: SimState, dt: float, rtol_cg: float = 1e-11) -> tuple[SimState, int, float]:
    """One IMEX step; returns (next_state, clipped_nodes, clipped_mass)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    ctx = _StepContext(state.params, state.domain)
    u, cn, cm, _, _ = ctx.advance(state.u, dt, rtol_cg)
    return SimState(state.params, state.domain, u, state.t + dt), cn, cm


@dataclass
class TrajectoryRecord:
    """Sampled history of a simulation run."""

    params: ModelParams
    domain: DiscreteDomain
    dt: float
    sample_every: int
    times: np.ndarray
    masses: np.ndarray            # (S, H)
    total: np.ndarray             # (S,)
    growth_integrals: np.ndarray  # (S, H): integral of r_i * u_i
    mean_fitness: np.ndarray      # (S, H): growth/mass, NaN when the host is empty
    clipped_nodes: int            # explicit-part clips (scheme events)
    clipped_mass: float
    floor_nodes: int              # solver-noise clips after the diffusion solve
    floor_mass: float
    final: SimState


def simulate(state: SimState, t_final: float, dt: float, sample_every: int = 10,
             rtol_cg: float = 1e-11) -> TrajectoryRecord:
    """Run the IMEX scheme to ``t_final`` and sample every ``sample_every`` steps.

    The first and last states are always sampled.  Time is accumulated as
    step_index * dt so sample times are reproducible exactly.
    """
    if dt <= 0 or t_final <= 0:
        raise ValueError("t_final and dt must be positive")
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    steps = max(1, int(math.ceil(t_final / dt - 1e-12)))
    ctx = _StepContext(state.params, state.domain)
    u = state.u.copy()
    t0 = state.t
    times, masses, growth = [], [], []

    def _record(k: int, u_now: np.ndarray) -> None:
        times.append(t0 + k * dt)
        masses.append(ctx.vol * u_now.sum(axis=1))
        growth.append(ctx.vol * (ctx.r * u_now).sum(axis=1))

    _record(0, u)
    clipped_nodes, clipped_mass = 0, 0.0
    floor_nodes, floor_mass = 0, 0.0
    for k in range(1, steps + 1):
        u, cn, cm, fn, fm = ctx.advance(u, dt, rtol_cg)
        clipped_nodes += cn
        clipped_mass += cm
        floor_nodes += fn
        floor_mass += fm
        if k % sample_every == 0 or k == steps:
            _record(k, u)

    times_a = np.array(times)
    masses_a = np.array(masses)
    growth_a = np.array(growth)
    with np.errstate(invalid="ignore", divide="ignore"):
        rbar = np.where(masses_a > 1e-14, growth_a / masses_a, np.nan)
    return TrajectoryRecord(
        params=state.params, domain=state.domain, dt=dt, sample_every=sample_every,
        times=times_a, masses=masses_a, total=masses_a.sum(axis=1),
        growth_integrals=growth_a, mean_fitness=rbar,
        clipped_nodes=clipped_nodes, clipped_mass=clipped_mass,
        floor_nodes=floor_nodes, floor_mass=floor_mass,
        final=SimState(state.params, state.domain, u, t0 + steps * dt),
    )


def mass_balance_residual(rec: TrajectoryRecord) -> float:
    """Worst mismatch between sampled dN_i/dt and the mass balance law.

    Compares centred differences of the sampled masses against the
    midpoint average of F_i - N_i^2 + delta*(mean_{k!=i} N_k - N_i), where
    F_i is the sampled growth integral.  Boundary leakage of the diffusion
    term and O(dt) splitting error both land in this residual, so it is a
    convergence diagnostic, not an identity.
    """
    t, m, f = rec.times, rec.masses, rec.growth_integrals
    if len(t) < 2:
        raise ValueError("need at least two samples for a balance residual")
    h = rec.params.landscape.hosts
    delta = rec.params.delta
    rhs = f - m * m + (
        delta * (m.sum(axis=1)[:, None] - m) / (h - 1) - delta * m if h > 1 else 0.0
    )
    dmdt = np.diff(m, axis=0) / np.diff(t)[:, None]
    mid = 0.5 * (rhs[1:] + rhs[:-1])
    return float(np.abs(dmdt - mid).max())


@dataclass
class FateReport:
    """Outcome of a run, scored against the eigenvalue sign when given."""

    verdict: str                # extinction | persistence | undecided
    eigenvalue: float | None
    agrees: bool | None
    tail_plateau: float         # min over the tail window of the best host mass
    extinction_level: float


def classify_fate(rec: TrajectoryRecord, eigenvalue: float | None = None,
                  extinction_factor: float = 1e-6, tail_fraction: float = 0.2) -> FateReport:
    """Label a trajectory extinction/persistence/undecided.

    Extinction: total mass fell below ``extinction_factor`` times its
    initial value and is nonincreasing over the tail window.  Persistence:
    some host keeps a mass of at least half the stationary plateau scale
    (-eigenvalue when provided, else the initial total) over the whole
    tail window.  Anything else is undecided.
    """
    n0 = float(rec.total[0])
    if n0 <= 0.0:
        return FateReport("extinction", eigenvalue, None if eigenvalue is None else eigenvalue > 0,
                          0.0, 0.0)
    k0 = max(0, int(math.floor(len(rec.times) * (1.0 - tail_fraction))) - 1)
    tail_total = rec.total[k0:]
    tail_hosts = rec.masses[k0:]
    level = extinction_factor * n0
    tail_plateau = float(tail_hosts.max(axis=1).min())  # worst moment of the best host
    plateau = -eigenvalue if (eigenvalue is not None and eigenvalue < 0) else n0
    slack = 1e-12 * n0
    if float(tail_total[-1]) < level and np.all(np.diff(tail_total) <= slack):
        verdict = "extinction"
    elif tail_plateau >= 0.5 * plateau:
        verdict = "persistence"
    else:
        verdict = "undecided"
    agrees: bool | None = None
    if eigenvalue is not None and verdict != "undecided":
        agrees = (verdict == "extinction") == (eigenvalue > 0)
    return FateReport(verdict, eigenvalue, agrees, tail_plateau, level)


def stationary_residual(state: SimState) -> float:
    """Scaled norm of the stationary equation at a state.

    Returns |nu*lap(u) + u*(r - N) + migration|_2 / (1 + |u|_2) in
    quadrature norms; fixed points of the IMEX step satisfy this exactly
    up to the inner CG tolerance, independent of dt.
    """
    ctx = _StepContext(state.params, state.domain)
    u = state.u
    masses = ctx.vol * u.sum(axis=1)
    rhs = ctx.nu * _kernels.lap_apply(u, state.domain.dims, ctx.inv_h2)
    rhs += u * (ctx.r - masses[:, None])
    if ctx.coup != 0.0:
        rhs += ctx.coup * (u.sum(axis=0)[None, :] - u) - state.params.delta * u
    scale = math.sqrt(ctx.vol)
    return float(np.linalg.norm(rhs) * scale / (1.0 + np.linalg.norm(u) * scale))


def proportionality_defect(state: SimState, eig: EigenResult) -> np.ndarray:
    """Relative L2 distance of each host density from the rescaled eigenmode.

    The candidate stationary profile is -value * phi_i / integral(phi_i);
    for one or two symmetric hosts the defect tends to zero, for three or
    more hosts it generally does not vanish and is reported as a
    diagnostic.
    """
    if eig.domain != state.domain:
        raise ValueError("state and eigenpair live on different domains")
    if eig.value >= 0:
        raise ValueError("a stationary comparison needs a negative eigenvalue")
    vol = state.domain.cell_volume()
    out = np.empty(state.u.shape[0])
    for i in range(state.u.shape[0]):
        phi = eig.fields[i].values
        target = -eig.value * phi / (vol * float(phi.sum()))
        num = np.linalg.norm(state.u[i] - target)
        out[i] = num / max(np.linalg.norm(target), 1e-300)
    return out
