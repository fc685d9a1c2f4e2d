"""Principal eigenpair of the coupled operator on a Dirichlet box grid.

The operator acts on a vector of host fields (phi_1..phi_H):

    (A phi)_i = -(mu^2/2) lap(phi_i) - r_i(x) phi_i
                - delta * (mean_{k != i} phi_k - phi_i)

discretized with the second-order stencil of :mod:`multipatch.domain`.
The ``loss`` variant (two hosts) keeps the full migration outflow but
halves the inflow:  -(delta/2) phi_k + delta phi_i.  Both are cooperative
operators, so the principal eigenvector is positive and simple, which is
what the shift-and-invert iteration below relies on.

Solving strategy: inverse iteration on (A - sigma)^-1 with sigma kept
strictly below the principal eigenvalue.  The shifted system is solved
directly (banded Cholesky) in 1D and by preconditioned CG in 2D/3D,
using the exact inverse of the host-decoupled part of the operator --
separable per host, hence cheap via per-axis tridiagonal eigenbases --
as the preconditioner.  Migration is the only part the CG has to work
for, so iteration counts stay modest even on fine grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, solveh_banded

from . import _kernels
from .analytics import ModelParams, lambda_bounds
from .domain import DiscreteDomain, Field, build_domain, integrate
from .errors import SolverError

KINDS = ("standard", "loss")


class _ShiftNotBelow(Exception):
    """Internal: the shifted operator was not positive definite."""


@dataclass
class CoupledOperator:
    """Grid realization of the coupled operator (standard or loss variant).

    ``axis_cache`` optionally shares per-axis eigenbases between operators;
    entries are keyed by everything that determines the 1D tridiagonal
    (grid size and spacing, alpha, mu, optimum coordinate), so one cache
    can safely serve sweeps that vary any mix of positions and rates.
    """

    params: ModelParams
    domain: DiscreteDomain
    kind: str = "standard"
    axis_cache: dict | None = None
    potentials: np.ndarray = field(init=False, repr=False)  # r_i on nodes, (H, N)
    w0: np.ndarray = field(init=False, repr=False)  # zero-shift potential part
    coup: float = field(init=False)
    nu: float = field(init=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"operator kind must be one of {KINDS}, got {self.kind!r}")
        ls = self.params.landscape
        if ls.n != self.domain.n:
            raise ValueError(
                f"landscape dimension {ls.n} does not match domain dimension {self.domain.n}"
            )
        h = ls.hosts
        if self.kind == "loss":
            if h != 2:
                raise ValueError(f"the loss variant is defined for exactly 2 hosts, got {h}")
            if self.params.delta <= 0:
                raise ValueError("the loss variant needs delta > 0")
        self.nu = 0.5 * self.params.mu**2
        delta = self.params.delta
        if h == 1:
            self.coup = 0.0
            delta_eff = 0.0
        elif self.kind == "loss":
            self.coup = 0.5 * delta
            delta_eff = delta
        else:
            self.coup = delta / (h - 1)
            delta_eff = delta
        self.potentials = _potential_grids(self.params, self.domain)
        self.w0 = delta_eff - self.potentials
        self._sep: _SeparableBasis | None = None

    @property
    def hosts(self) -> int:
        return self.params.landscape.hosts

    def spectral_floor(self) -> float:
        """Certified lower bound on the spectrum: the operator is >= -r_max."""
        return -self.params.landscape.r_max

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Operator applied to stacked host fields, shape (H, N)."""
        dom = self.domain
        return _kernels.coupled_apply(x, self.w0, self.coup, self.nu, dom.dims, 1.0 / dom.h**2)

    def solve_shifted(self, sigma: float, b: np.ndarray, rtol: float,
                      x0: np.ndarray | None = None, max_iter: int = 20000):
        """Solve (A - sigma) y = b; returns (y, inner_iterations).

        Raises ``_ShiftNotBelow`` when the shifted operator is not positive
        definite, i.e. sigma is not below the principal eigenvalue.
        """
        if self.domain.n == 1:
            return self._solve_banded(sigma, b), 1
        return self._solve_pcg(sigma, b, rtol, x0, max_iter)

    # -- 1D: direct banded Cholesky ------------------------------------

    def _solve_banded(self, sigma: float, b: np.ndarray) -> np.ndarray:
        H, N = b.shape
        dom = self.domain
        inv_h2 = 1.0 / dom.h**2
        u = H  # bandwidth: host coupling within a node plus one grid neighbour
        ab = np.zeros((u + 1, H * N))
        cols = np.arange(N) * H
        for i in range(H):
            ab[u, cols + i] = 2.0 * self.nu * inv_h2 + self.w0[i] - sigma
            for k in range(i):
                ab[u - (i - k), cols + i] = -self.coup
        ab[0, H:] = -self.nu * inv_h2  # same host, previous node (offset H)
        # offset-H slots of the first node stay zero; rows 1..H-1 of the first
        # columns are unused padding in the upper-banded convention.
        try:
            sol = solveh_banded(ab, b.T.reshape(H * N), lower=False)
        except np.linalg.LinAlgError as exc:
            raise _ShiftNotBelow(str(exc)) from None
        return np.ascontiguousarray(sol.reshape(N, H).T)

    # -- 2D/3D: CG with the host-decoupled exact inverse ----------------

    def _basis(self) -> "_SeparableBasis":
        if self._sep is None:
            self._sep = _SeparableBasis(self)
        return self._sep

    def _solve_pcg(self, sigma: float, b: np.ndarray, rtol: float,
                   x0: np.ndarray | None, max_iter: int):
        dom = self.domain
        dims, inv_h2 = dom.dims, 1.0 / dom.h**2
        w = self.w0 - sigma
        sep = self._basis()
        den = sep.denominators(sigma)
        if np.any(den <= 0.0):
            raise _ShiftNotBelow("decoupled part not positive definite at this shift")

        def apply_a(v: np.ndarray) -> np.ndarray:
            return _kernels.coupled_apply(v, w, self.coup, self.nu, dims, inv_h2)

        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return np.zeros_like(b), 0
        if x0 is None:
            x = np.zeros_like(b)
            r = b.copy()
        else:
            x = np.array(x0)
            r = b - apply_a(x)
        z = sep.solve(r, den)
        p = z.copy()
        rz = float(np.dot(r.ravel(), z.ravel()))
        it = 0
        tol_abs = rtol * bnorm
        while it < max_iter:
            rn = float(np.linalg.norm(r))
            if rn <= tol_abs:
                break
            ap = apply_a(p)
            pap = float(np.dot(p.ravel(), ap.ravel()))
            if pap <= 0.0:
                raise _ShiftNotBelow("CG breakdown: shifted operator not positive definite")
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            z = sep.solve(r, den)
            rz_new = float(np.dot(r.ravel(), z.ravel()))
            beta = rz_new / rz
            rz = rz_new
            p = z + beta * p
            it += 1
        else:
            rn = float(np.linalg.norm(r))
            if rn > 0.3 * bnorm:
                raise SolverError(
                    f"inner CG stagnated: relative residual {rn / bnorm:.2e} "
                    f"after {max_iter} iterations"
                )
        return x, it


class _SeparableBasis:
    """Per-host, per-axis eigenbases of the decoupled part of the operator.

    The decoupled part is a sum of 1D tridiagonal operators (stencil
    kinetic term plus the per-axis share of the quadratic fitness dip),
    so its inverse is exact in the tensor eigenbasis.  Used as the CG
    preconditioner; denominators are rebuilt per shift, the bases are not.
    """

    def __init__(self, op: CoupledOperator) -> None:
        dom = op.domain
        ls = op.params.landscape
        inv_h2 = 1.0 / dom.h**2
        ax = dom.axis()
        off = np.full(dom.m - 1, -op.nu * inv_h2)
        self.vecs: list[list[np.ndarray]] = []
        axis_vals: list[list[np.ndarray]] = []
        cache = op.axis_cache
        for i in range(1, ls.hosts + 1):
            oi = ls.optimum(i)
            vecs_i, vals_i = [], []
            for d in range(dom.n):
                key = (dom.m, float(dom.h), float(ls.alpha), float(op.nu),
                       float(oi[d]))
                hit = cache.get(key) if cache is not None else None
                if hit is None:
                    q = 0.5 * ls.alpha * (ax - oi[d]) ** 2
                    vals, vecs = eigh_tridiagonal(2.0 * op.nu * inv_h2 + q, off)
                    vecs = np.ascontiguousarray(vecs)
                    if cache is not None:
                        cache[key] = (vals, vecs)
                else:
                    vals, vecs = hit
                vecs_i.append(vecs)
                vals_i.append(vals)
            self.vecs.append(vecs_i)
            axis_vals.append(vals_i)
        delta_eff = op.w0[0, 0] + op.potentials[0, 0]  # constant delta part
        base = []
        for vals_i in axis_vals:
            acc = vals_i[0]
            for d in range(1, dom.n):
                acc = np.add.outer(acc, vals_i[d])
            base.append(acc + (delta_eff - ls.r_max))
        self.base = np.stack([b_.reshape(-1) for b_ in base])  # (H, N)
        self.dims = dom.dims

    def denominators(self, sigma: float) -> np.ndarray:
        return self.base - sigma

    def solve(self, r: np.ndarray, den: np.ndarray) -> np.ndarray:
        out = np.empty_like(r)
        for i in range(r.shape[0]):
            v = self.vecs[i]
            if len(self.dims) == 2:
                f = r[i].reshape(self.dims)
                t = v[0].T @ f @ v[1]
                t /= den[i].reshape(self.dims)
                out[i] = (v[0] @ t @ v[1].T).reshape(-1)
            else:
                f = r[i].reshape(self.dims)
                t = np.tensordot(v[0].T, f, axes=(1, 0))
                t = np.tensordot(v[1].T, t, axes=(1, 1)).transpose(1, 0, 2)
                t = np.tensordot(v[2].T, t, axes=(1, 2)).transpose(1, 2, 0)
                t /= den[i].reshape(self.dims)
                t = np.tensordot(v[0], t, axes=(1, 0))
                t = np.tensordot(v[1], t, axes=(1, 1)).transpose(1, 0, 2)
                t = np.tensordot(v[2], t, axes=(1, 2)).transpose(1, 2, 0)
                out[i] = t.reshape(-1)
        return out


def _potential_grids(params: ModelParams, dom: DiscreteDomain) -> np.ndarray:
    """Fitness r_i sampled on the grid, one flat row per host, shape (H, N)."""
    ls = params.landscape
    ax = dom.axis()
    rows = []
    for i in range(1, ls.hosts + 1):
        oi = ls.optimum(i)
        acc = 0.5 * ls.alpha * (ax - oi[0]) ** 2
        for d in range(1, dom.n):
            acc = np.add.outer(acc, 0.5 * ls.alpha * (ax - oi[d]) ** 2)
        rows.append((ls.r_max - acc).reshape(-1))
    return np.ascontiguousarray(np.stack(rows))


def assemble_operator(params: ModelParams, dom: DiscreteDomain,
                      kind: str = "standard",
                      axis_cache: dict | None = None) -> CoupledOperator:
    """Validated grid operator; ``kind`` is ``standard`` or ``loss``."""
    return CoupledOperator(params=params, domain=dom, kind=kind,
                           axis_cache=axis_cache)


@dataclass
class EigenResult:
    """Converged principal eigenpair on one grid."""

    value: float
    fields: list[Field]
    residual_norm: float
    iterations: int
    cg_iterations: int
    shift: float
    domain: DiscreteDomain
    kind: str
    params: ModelParams

    def mass(self, i: int) -> float:
        """Integral of the i-th host component (1-based)."""
        return integrate(self.fields[i - 1])


def principal_eigenpair(op: CoupledOperator, tol: float = 1e-8,
                        max_outer: int = 80, x0: np.ndarray | None = None) -> EigenResult:
    """Principal (smallest) eigenvalue and positive eigenvector of ``op``.

    Inverse iteration with adaptive shifts.  The shift starts at the
    certified floor (spectral_floor - 1), moves up toward the Rayleigh
    quotient as the iterate converges, and backs off whenever positive
    definiteness of the shifted system fails.  Convergence is declared on
    the per-host relative residual max_i |(A phi)_i - value*phi_i| / |phi_i|.
    """
    dom = op.domain
    H, N = op.hosts, dom.size
    floor = op.spectral_floor() - 1.0
    sigma = floor
    if x0 is None:
        x = np.full((H, N), 1.0)
    else:
        x = np.array(x0, dtype=np.float64)
    x /= np.linalg.norm(x)
    rho = None
    res = math.inf
    share = 1.0  # smallest host-component norm of the current iterate
    total_cg = 0
    backoffs = 0
    margin = 3.0  # multiple of the residual kept between shift and quotient

    def _retreat(s: float) -> float:
        # A failed shift certifies the eigenvalue lies below it.  Retreat
        # geometrically below the Rayleigh quotient rather than collapsing
        # toward the floor: for a near-degenerate cluster the quotient can
        # exceed the smallest eigenvalue by many residuals, and only a
        # shift close below it keeps a usable contraction ratio.
        nonlocal margin
        margin *= 2.0
        if rho is None or not math.isfinite(res):
            return 0.5 * (s + floor)
        step = margin * max(res, 1e3 * np.finfo(float).eps * (abs(rho) + 1.0))
        return max(floor, rho - step)

    for outer in range(1, max_outer + 1):
        rtol_inner = min(1e-2, max(0.05 * res, 0.02 * tol * share, 1e-14))
        try:
            y, cg_it = op.solve_shifted(sigma, x, rtol_inner, x0=None)
        except _ShiftNotBelow:
            backoffs += 1
            if backoffs > 25 or sigma <= floor:
                raise SolverError(
                    f"shifted solves keep failing near sigma={sigma!r}; "
                    "the operator may be mis-assembled"
                )
            sigma = _retreat(sigma)
            continue
        total_cg += cg_it
        ymax, ymin = float(y.max()), float(y.min())
        if ymax <= 0.0:
            y = -y
            ymax, ymin = -ymin, -ymax
        if ymin < -max(1e-8, 3e-2 * rtol_inner) * ymax:
            # Sign-mixed iterate: the shift overshot the principal eigenvalue.
            # A genuine overshoot flips an O(1) fraction of the mass, while
            # inner-solve noise scales with rtol_inner, so the threshold
            # tracks the requested inner accuracy.
            backoffs += 1
            if backoffs > 25:
                raise SolverError("positivity of the inverse iterate failed repeatedly")
            sigma = _retreat(sigma)
            continue
        y /= np.linalg.norm(y)
        ay = op.apply(y)
        rho = float(np.dot(y.ravel(), ay.ravel()))
        rvec = ay - rho * y
        host_norms = np.linalg.norm(y, axis=1)
        share = max(float(host_norms.min()), 1e-8)
        res_hosts = np.linalg.norm(rvec, axis=1) / np.maximum(host_norms, 1e-300)
        res = float(np.linalg.norm(rvec))
        x = y
        if float(res_hosts.max()) <= tol:
            return _finish(op, y, rho, float(res_hosts.max()), outer, total_cg, sigma)
        sigma = max(floor, rho - max(margin * res, 1e3 * np.finfo(float).eps * (abs(rho) + 1.0)))
    raise SolverError(
        f"no convergence after {max_outer} outer iterations; "
        f"attained residual {res:.3e} (target {tol:.1e})"
    )


def _finish(op: CoupledOperator, y: np.ndarray, rho: float, res: float,
            outers: int, total_cg: int, sigma: float) -> EigenResult:
    dom = op.domain
    scale = math.sqrt(dom.cell_volume())
    y = y / (np.linalg.norm(y) * scale)  # quadrature normalization, sum of <phi_i,phi_i> = 1
    ymax = float(y.max())
    if float(y.min()) < -1e-8 * ymax:
        raise SolverError("converged eigenvector is not positive: shift misconfiguration")
    fields = [Field(dom, y[i].copy()) for i in range(op.hosts)]
    return EigenResult(
        value=rho, fields=fields, residual_norm=res, iterations=outers,
        cg_iterations=total_cg, shift=sigma, domain=dom, kind=op.kind, params=op.params,
    )


def rayleigh_quotient(op: CoupledOperator, fields) -> float:
    """Quadratic form <Psi, A Psi> for a normalized candidate Psi.

    Accepts a list of Fields or a stacked (H, N) array; the candidate must
    satisfy sum_i <psi_i, psi_i> = 1 within 1e-8.  Discrete summation by
    parts makes this identical to the kinetic + potential + migration
    split of the quotient.
    """
    if isinstance(fields, np.ndarray):
        x = np.ascontiguousarray(fields, dtype=np.float64)
    else:
        x = np.ascontiguousarray(np.stack([f.values for f in fields]))
    if x.shape != (op.hosts, op.domain.size):
        raise ValueError(f"candidate must have shape {(op.hosts, op.domain.size)}, got {x.shape}")
    vol = op.domain.cell_volume()
    nrm = vol * float(np.dot(x.ravel(), x.ravel()))
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"candidate is not normalized: sum of squares integrates to {nrm!r}")
    return vol * float(np.dot(x.ravel(), op.apply(x).ravel()))


def _auto_radius(params: ModelParams) -> float:
    """Starting box half-width: host extent plus a confinement margin."""
    ls = params.landscape
    extent = max(abs(c) for o in ls.optima for c in o)
    dip = math.sqrt(2.0 * (max(ls.r_max, 0.0) + abs(ls.r_max) + 10.0) / ls.alpha)
    width = math.sqrt(params.mu / math.sqrt(ls.alpha))  # ground-mode length scale
    return extent + max(dip, 6.0 * width)


def _auto_m(params: ModelParams, radius: float) -> int:
    width = math.sqrt(params.mu / math.sqrt(params.landscape.alpha))
    h_target = width / 4.0
    return max(31, int(math.ceil(2.0 * radius / h_target)) - 1)


def _refine_fields(x: np.ndarray, old: DiscreteDomain, new: DiscreteDomain) -> np.ndarray:
    """Linear interpolation of stacked fields onto a finer/larger grid (warm start)."""
    from scipy.interpolate import RegularGridInterpolator

    ax_old = [old.axis()] * old.n
    pts = new.nodes()
    out = np.empty((x.shape[0], new.size))
    for i in range(x.shape[0]):
        interp = RegularGridInterpolator(
            ax_old, x[i].reshape(old.dims), method="linear",
            bounds_error=False, fill_value=0.0,
        )
        out[i] = interp(pts)
    return np.ascontiguousarray(out)


def lambda_H(params: ModelParams, accuracy: float = 1e-3, kind: str = "standard",
             r0: float | None = None, m0: int | None = None, max_rungs: int = 16,
             tol: float | None = None, max_nodes: int = 4_000_000) -> EigenResult:
    """Principal eigenvalue resolved to ``accuracy`` by a two-phase grid ladder.

    Phase one grows the box (factor sqrt(2) per rung) at fixed spacing,
    keeping grids nested so the eigenvalue must decrease; a violation
    beyond solver slack raises :class:`SolverError`.  Phase two halves the
    spacing at fixed box until the change between rungs, reduced by the
    second-order convergence factor, is below ``accuracy/2``.  Returns the
    result of the final rung.  Rungs larger than ``max_nodes`` grid nodes
    per host raise :class:`SolverError` rather than thrash memory.
    """
    if accuracy <= 0:
        raise ValueError(f"accuracy must be positive, got {accuracy}")
    if max_rungs < 3:
        raise ValueError(f"the ladder needs at least 3 rungs, got {max_rungs}")
    if tol is None:
        tol = max(1e-10, min(1e-7, accuracy * 1e-3))
    radius = float(r0) if r0 is not None else _auto_radius(params)
    m = int(m0) if m0 is not None else _auto_m(params, radius)
    n = params.landscape.n

    def _check_budget(m_next: int) -> None:
        if m_next**n > max_nodes:
            raise SolverError(
                f"accuracy {accuracy} would need {m_next}^{n} nodes per host, "
                f"beyond the budget of {max_nodes}; relax accuracy or raise max_nodes"
            )

    _check_budget(m)
    dom = build_domain(n, radius, m)
    op = assemble_operator(params, dom, kind)
    result = principal_eigenpair(op, tol=tol)
    rungs = 1

    # Phase 1: enlarge the box at (exactly) fixed spacing, nested grids.
    while rungs < max_rungs:
        h = dom.h
        m_next = int(math.ceil((math.sqrt(2.0) * 2.0 * dom.radius) / h)) - 1
        if (m_next - dom.m) % 2 == 1:
            m_next += 1
        _check_budget(m_next)
        r_next = h * (m_next + 1) / 2.0
        dom_next = build_domain(n, r_next, m_next)
        op_next = assemble_operator(params, dom_next, kind)
        x0 = _refine_fields(np.stack([f.values for f in result.fields]), dom, dom_next)
        nxt = principal_eigenpair(op_next, tol=tol, x0=x0)
        rungs += 1
        slack = 4.0 * (result.residual_norm + nxt.residual_norm) + 1e-12 * (abs(result.value) + 1.0)
        if nxt.value > result.value + slack:
            raise SolverError(
                f"box-growth rung raised the eigenvalue: {result.value!r} -> {nxt.value!r}"
            )
        drop = result.value - nxt.value
        dom, op, result = dom_next, op_next, nxt
        if drop <= accuracy / 4.0:
            break
    else:
        raise SolverError(
            f"box growth did not settle within {max_rungs} rungs (last change {drop:.3e})"
        )

    # Phase 2: halve the spacing at fixed box until second-order settled.
    while True:
        if rungs >= max_rungs:
            raise SolverError(
                f"grid refinement exhausted {max_rungs} rungs before reaching accuracy {accuracy}"
            )
        _check_budget(2 * dom.m + 1)
        dom_next = build_domain(n, dom.radius, 2 * dom.m + 1)
        op_next = assemble_operator(params, dom_next, kind)
        x0 = _refine_fields(np.stack([f.values for f in result.fields]), dom, dom_next)
        nxt = principal_eigenpair(op_next, tol=tol, x0=x0)
        rungs += 1
        change = abs(nxt.value - result.value)
        dom, op, result = dom_next, op_next, nxt
        if change / 3.0 <= accuracy / 2.0:  # O(h^2): remaining error ~ change/3
            break

    bounds = lambda_bounds(params)
    guard = max(accuracy, 10.0 * tol)
    if result.kind == "standard":
        if not (bounds.lower - guard <= result.value <= bounds.crude_upper + guard):
            raise SolverError(
                f"ladder result {result.value!r} violates the a priori sandwich "
                f"[{bounds.lower!r}, {bounds.crude_upper!r}]"
            )
    return result


def lambda_tilde2(params: ModelParams, accuracy: float = 1e-3, **kw) -> EigenResult:
    """Principal eigenvalue of the two-host loss variant (ladder-resolved)."""
    return lambda_H(params, accuracy=accuracy, kind="loss", **kw)
