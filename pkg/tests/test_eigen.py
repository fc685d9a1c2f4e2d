"""Eigensolver: dense oracles, variational properties, exact discrete identities."""
import math

import numpy as np
import pytest
from conftest import dense_coupled

from multipatch.analytics import (
    FitnessLandscape,
    ModelParams,
    lambda1,
    lambda_bounds,
    symmetric_pair,
)
from multipatch.domain import Field, build_domain, integrate
from multipatch.eigen import (
    EigenResult,
    assemble_operator,
    lambda_H,
    lambda_tilde2,
    principal_eigenpair,
    rayleigh_quotient,
)
from multipatch.errors import SolverError

SQRT2 = math.sqrt(2.0)


def _pair(alpha=1.0, mu=SQRT2, delta=1.0, beta=1.0, n=2, r_max=1.0, extra=()):
    return ModelParams(symmetric_pair(alpha, r_max, beta, n=n, extra=extra), mu, delta)


def _single(alpha=1.0, mu=1.0, n=1, r_max=0.0):
    ls = FitnessLandscape(alpha=alpha, r_max=r_max, optima=((0.0,) * n,))
    return ModelParams(ls, mu, 0.0)


# ---------------------------------------------------------------------------
# operator assembly


def test_assemble_validation():
    p = _pair(n=1)
    dom = build_domain(1, 5.0, 20)
    with pytest.raises(ValueError):
        assemble_operator(p, dom, kind="weird")
    with pytest.raises(ValueError):
        assemble_operator(p, build_domain(2, 5.0, 8))
    three = _pair(n=1, extra=((0.5,),))
    with pytest.raises(ValueError):
        assemble_operator(three, dom, kind="loss")
    with pytest.raises(ValueError):
        assemble_operator(_pair(n=1, delta=0.0), dom, kind="loss")


@pytest.mark.parametrize("n,m,hosts,kind", [
    (1, 15, 1, "standard"), (1, 12, 2, "standard"), (1, 10, 3, "standard"),
    (2, 6, 2, "standard"), (1, 12, 2, "loss"),
])
def test_apply_matches_dense(n, m, hosts, kind):
    extra = (((0.3,) + (0.0,) * (n - 1)),) if hosts == 3 else ()
    p = _pair(n=n, extra=extra) if hosts >= 2 else _single(n=n)
    dom = build_domain(n, 4.0, m)
    op = assemble_operator(p, dom, kind=kind)
    rng = np.random.default_rng(m + hosts)
    x = rng.standard_normal((hosts, dom.size))
    got = op.apply(x)
    want = (dense_coupled(op) @ x.ravel()).reshape(hosts, dom.size)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_operator_bounded_below_by_floor():
    p = _pair(n=1, delta=3.0, r_max=0.8)
    dom = build_domain(1, 6.0, 40)
    op = assemble_operator(p, dom)
    assert op.spectral_floor() == -0.8
    rng = np.random.default_rng(2)
    vol = dom.cell_volume()
    for _ in range(40):
        v = rng.standard_normal((2, dom.size))
        v /= math.sqrt(vol * float(np.dot(v.ravel(), v.ravel())))
        q = vol * float(np.dot(v.ravel(), op.apply(v).ravel()))
        assert q >= -0.8 - 1e-10


# ---------------------------------------------------------------------------
# principal eigenpair against dense eigendecompositions


@pytest.mark.parametrize("hosts", [1, 2, 3])
def test_pair_matches_dense_1d(hosts):
    extra = ((0.4,),) if hosts == 3 else ()
    p = _pair(n=1, delta=0.7, extra=extra) if hosts >= 2 else _single(n=1, r_max=1.0)
    dom = build_domain(1, 6.0, 24)
    op = assemble_operator(p, dom)
    res = principal_eigenpair(op, tol=1e-12)
    vals, vecs = np.linalg.eigh(dense_coupled(op))
    assert res.value == pytest.approx(vals[0], abs=1e-10)
    mine = np.concatenate([f.values for f in res.fields])
    cos = abs(np.dot(mine, vecs[:, 0])) / np.linalg.norm(mine) / np.linalg.norm(vecs[:, 0])
    assert cos > 1.0 - 1e-10
    assert all(f.values.min() > -1e-10 * f.values.max() for f in res.fields)
    assert res.residual_norm <= 1e-12
    assert all(res.mass(i) > 0 for i in range(1, hosts + 1))


def test_pair_matches_dense_2d():
    p = _pair(n=2, delta=1.3, beta=0.8)
    dom = build_domain(2, 4.5, 9)
    op = assemble_operator(p, dom)
    res = principal_eigenpair(op, tol=1e-11)
    vals = np.linalg.eigvalsh(dense_coupled(op))
    assert res.value == pytest.approx(vals[0], abs=1e-9)


def test_loss_kind_matches_dense():
    p = _pair(n=1, delta=2.0)
    dom = build_domain(1, 6.0, 30)
    op = assemble_operator(p, dom, kind="loss")
    res = principal_eigenpair(op, tol=1e-12)
    vals = np.linalg.eigvalsh(dense_coupled(op))
    assert res.value == pytest.approx(vals[0], abs=1e-10)
    assert res.kind == "loss"


def test_warm_start_agrees_with_cold():
    p = _pair(n=2, delta=0.6)
    dom = build_domain(2, 5.0, 15)
    op = assemble_operator(p, dom)
    cold = principal_eigenpair(op, tol=1e-10)
    rng = np.random.default_rng(1)
    x0 = np.abs(rng.standard_normal((2, dom.size))) + 0.1
    warm = principal_eigenpair(op, tol=1e-10, x0=x0)
    assert warm.value == pytest.approx(cold.value, abs=1e-9)


def test_large_delta_converges():
    # strong migration leaves a tiny spectral gap; the shift logic must
    # not mistake inner-solve noise for a sign flip
    for delta in (100.0, 1000.0):
        p = _pair(n=1, delta=delta, beta=2.0)
        dom = build_domain(1, 8.0, 120)
        res = principal_eigenpair(assemble_operator(p, dom), tol=1e-9)
        b = lambda_bounds(p)
        assert b.lower - 1e-6 <= res.value <= b.crude_upper + 1e-6


def test_eigenfields_quadrature_normalized():
    p = _pair(n=1, delta=1.0)
    dom = build_domain(1, 6.0, 40)
    res = principal_eigenpair(assemble_operator(p, dom), tol=1e-11)
    total = sum(integrate(Field(dom, f.values**2)) for f in res.fields)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_mirror_symmetry_exact():
    # swapping hosts and reflecting the axis maps the operator onto itself,
    # in exact floating point, because the grid is antisymmetric
    p = _pair(n=1, delta=0.8, beta=1.2)
    dom = build_domain(1, 6.0, 51)
    res = principal_eigenpair(assemble_operator(p, dom), tol=1e-12)
    f1, f2 = res.fields[0].values, res.fields[1].values
    assert np.allclose(f1, f2[::-1], rtol=0.0, atol=1e-9 * f1.max())


# ---------------------------------------------------------------------------
# Rayleigh quotient


def test_rayleigh_at_eigenvector_and_variational_bound():
    p = _pair(n=1, delta=1.0)
    dom = build_domain(1, 6.0, 48)
    op = assemble_operator(p, dom)
    res = principal_eigenpair(op, tol=1e-12)
    assert rayleigh_quotient(op, res.fields) == pytest.approx(res.value, abs=1e-10)
    rng = np.random.default_rng(6)
    vol = dom.cell_volume()
    for _ in range(25):
        v = np.abs(rng.standard_normal((2, dom.size))) + 0.05
        v /= math.sqrt(vol * float(np.dot(v.ravel(), v.ravel())))
        assert rayleigh_quotient(op, v) >= res.value - 1e-10


def test_rayleigh_gaussian_ansatz_single_host():
    # the sampled ground mode nearly minimizes the quotient; its value
    # sits within O(h^2) of the closed form and above the grid minimum
    p = _single(alpha=1.0, mu=1.0, n=1, r_max=0.0)
    dom = build_domain(1, 9.0, 180)
    op = assemble_operator(p, dom)
    x = dom.axis()
    g = np.exp(-(x**2) / 2.0)
    g /= math.sqrt(dom.cell_volume() * float(np.dot(g, g)))
    q = rayleigh_quotient(op, g[None, :])
    assert q == pytest.approx(lambda1(1.0, 1.0, 1, 0.0), abs=2e-3)
    res = principal_eigenpair(op, tol=1e-11)
    assert q >= res.value - 1e-11


def test_rayleigh_rejects_bad_candidates():
    p = _pair(n=1)
    dom = build_domain(1, 5.0, 20)
    op = assemble_operator(p, dom)
    with pytest.raises(ValueError):
        rayleigh_quotient(op, np.ones((2, dom.size)))  # not normalized
    with pytest.raises(ValueError):
        rayleigh_quotient(op, np.ones((3, dom.size)))  # wrong host count


# ---------------------------------------------------------------------------
# exact discrete orderings on a common grid


def test_monotone_in_delta_alpha_mu_exactly():
    # d(lambda)/d(delta) = 1 - (2/(H-1)) * sum <phi_i, phi_j> >= 0 by
    # Cauchy-Schwarz, and the alpha/mu derivatives are quadratic forms of
    # positive-semidefinite operator increments, so on one fixed grid the
    # orderings hold to solver accuracy with no discretization caveat
    dom = build_domain(1, 7.0, 80)
    tol = 1e-11

    def value(alpha=1.0, mu=SQRT2, delta=1.0):
        p = _pair(alpha=alpha, mu=mu, delta=delta, n=1, beta=1.0)
        return principal_eigenpair(assemble_operator(p, dom), tol=tol).value

    slack = 50.0 * tol
    deltas = [value(delta=d) for d in (0.0, 0.5, 1.0, 2.0, 5.0)]
    assert all(b >= a - slack for a, b in zip(deltas, deltas[1:]))
    alphas = [value(alpha=a) for a in (0.5, 1.0, 2.0)]
    assert all(b >= a - slack for a, b in zip(alphas, alphas[1:]))
    mus = [value(mu=m) for m in (1.0, SQRT2, 2.0)]
    assert all(b >= a - slack for a, b in zip(mus, mus[1:]))


def test_three_host_below_loss_pair_exactly():
    # restricting the three-host quadratic form to vectors with an empty
    # third component reproduces the loss-pair form, so on a common grid
    # lambda_3 <= lambda_tilde_2 holds up to solver residuals
    dom = build_domain(1, 7.0, 60)
    pair = _pair(n=1, delta=1.5, beta=1.0)
    three = _pair(n=1, delta=1.5, beta=1.0, extra=((2.5,),))
    loss_res = principal_eigenpair(assemble_operator(pair, dom, kind="loss"), tol=1e-12)
    three_op = assemble_operator(three, dom)
    three_res = principal_eigenpair(three_op, tol=1e-12)
    padded = np.vstack([np.stack([f.values for f in loss_res.fields]),
                        np.zeros((1, dom.size))])
    q = rayleigh_quotient(three_op, padded)
    assert q == pytest.approx(loss_res.value, abs=1e-11)  # forms agree exactly
    assert three_res.value <= loss_res.value + 1e-10


def test_loss_pair_brackets():
    # lambda_2 < lambda_tilde_2 <= lambda_1 + delta; the tested gaps are
    # O(0.3), so modest ladder accuracy is plenty
    p = _pair(n=2, delta=1.0, beta=1.0)
    lam2 = lambda_H(p, accuracy=1e-3)
    lamt = lambda_tilde2(p, accuracy=1e-3)
    lam1 = lambda1(1.0, SQRT2, 2, 1.0)
    assert lamt.value > lam2.value + 1e-2
    assert lamt.value <= lam1 + p.delta + 1e-2


# ---------------------------------------------------------------------------
# the grid ladder


@pytest.mark.parametrize("n,alpha,mu,r_max", [(1, 1.0, 1.0, 0.0), (2, 1.0, SQRT2, 1.0)])
def test_ladder_single_host_closed_form(n, alpha, mu, r_max):
    res = lambda_H(_single(alpha=alpha, mu=mu, n=n, r_max=r_max), accuracy=1e-3)
    assert res.value == pytest.approx(lambda1(alpha, mu, n, r_max), abs=1e-3)


def test_ladder_sandwich_two_hosts():
    p = _pair(n=2, delta=2.0, beta=1.0)
    res = lambda_H(p, accuracy=1e-3)
    b = lambda_bounds(p)
    assert b.lower - 2e-3 <= res.value <= b.upper + 2e-3


def test_ladder_rejects_bad_arguments():
    p = _single(n=1)
    with pytest.raises(ValueError):
        lambda_H(p, accuracy=0.0)
    with pytest.raises(ValueError):
        lambda_H(p, accuracy=1e-3, max_rungs=2)
    with pytest.raises(SolverError):
        lambda_H(p, accuracy=1e-3, max_nodes=100)
    with pytest.raises(SolverError):
        lambda_H(_pair(n=2), accuracy=1e-12, max_rungs=3)


def test_axis_cache_shared_across_operators():
    cache = {}
    p1 = _pair(n=2, delta=1.0, extra=((0.5, 0.5),))
    p2 = _pair(n=2, delta=1.0, extra=((1.5, 0.5),))
    dom = build_domain(2, 5.0, 21)
    r1 = principal_eigenpair(assemble_operator(p1, dom, axis_cache=cache), tol=1e-10)
    assert len(cache) > 0
    r2 = principal_eigenpair(assemble_operator(p2, dom, axis_cache=cache), tol=1e-10)
    fresh1 = principal_eigenpair(assemble_operator(p1, dom), tol=1e-10)
    fresh2 = principal_eigenpair(assemble_operator(p2, dom), tol=1e-10)
    assert r1.value == pytest.approx(fresh1.value, abs=1e-12)
    assert r2.value == pytest.approx(fresh2.value, abs=1e-12)
    # shared entries: +-1 and 0 coordinates recur, 0.5/1.5 differ per host
    assert {round(k[-1], 3) for k in cache} >= {-1.0, 0.0, 0.5, 1.0, 1.5}
    # keys carry grid and rate identity so mixed sweeps cannot collide
    assert all(len(k) == 5 for k in cache)


def test_axis_cache_safe_across_rates():
    # one cache shared across differing alpha and mu must not poison the
    # preconditioner: values must match fresh solves exactly
    cache = {}
    dom = build_domain(2, 6.0, 31)
    for alpha, mu in ((1.0, 1.2), (1.5, 1.2), (1.0, 1.7)):
        p = _pair(n=2, alpha=alpha, mu=mu, delta=0.8)
        shared = principal_eigenpair(assemble_operator(p, dom, axis_cache=cache),
                                     tol=1e-10)
        fresh = principal_eigenpair(assemble_operator(p, dom), tol=1e-10)
        assert shared.value == pytest.approx(fresh.value, abs=1e-12)


def test_result_metadata():
    p = _pair(n=1, delta=0.5)
    res = lambda_H(p, accuracy=1e-3)
    assert isinstance(res, EigenResult)
    assert res.kind == "standard"
    assert res.params is p
    assert res.iterations >= 1
    assert res.domain.n == 1
