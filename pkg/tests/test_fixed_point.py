import numpy as np
import pytest
import scipy.sparse as sp

from compprox.builders import fused_difference_operator, incidence_operator, Graph
from compprox.errors import DimensionError, InadmissibleStepError
from compprox.fixed_point import (
    FixedPointState,
    SpdOperator,
    build_H,
    check_lam,
    composite_residual,
    default_lam,
    gram_spectrum,
    picard_opial,
    prox_composite,
    quad_min_composite,
)
from compprox.linalg import LinearOperator, SpectralInterval
from compprox.prox import ProxPenalty, prox_l1


def test_picard_identity_map():
    st = picard_opial(lambda v: v, np.array([1.0, -2.0]))
    assert st.converged and st.iterations == 1
    assert np.array_equal(st.v, [1.0, -2.0])


def test_picard_negation_contracts_by_point_six():
    for n in (1, 5, 20, 50):
        st = picard_opial(lambda v: -v, np.array([1.0]), kappa=0.2, tol=0.0, max_iter=n)
        assert abs(st.v[0]) == pytest.approx(0.6**n, rel=1e-13)
    st = picard_opial(lambda v: -v, np.array([1.0]), kappa=0.2)
    assert st.converged and abs(st.v[0]) <= 1e-10


def test_pure_picard_oscillates():
    st = picard_opial(lambda v: -v, np.array([1.0]), kappa=0.0, max_iter=500)
    assert not st.converged and st.iterations == 500
    assert abs(st.v[0]) == 1.0


def test_picard_contraction_example():
    st = picard_opial(lambda v: 0.5 * v + 1.0, np.array([0.0]), kappa=0.2, tol=1e-10)
    assert st.converged and st.iterations <= 60
    assert st.v[0] == pytest.approx(2.0, abs=1e-9)


def test_picard_rejects_bad_kappa():
    with pytest.raises(ValueError):
        picard_opial(lambda v: v, np.zeros(1), kappa=1.0)


def test_build_H_degenerate_cases(rng):
    x = np.array([1.0, 2.0])
    B = LinearOperator.identity(2)
    H = build_H(ProxPenalty.l1(0.0), B, None, x, 1.0)
    assert np.array_equal(H(rng.standard_normal(2)), [0, 0])
    # B = 0: A v = v
    Z = LinearOperator.zeros(3, 2)
    H = build_H(ProxPenalty.l1(1.0), Z, None, x, 1.0)
    v = np.array([2.0, -0.5, 0.3])
    assert np.allclose(H(v), v - prox_l1(v, 1.0))
    # B = I, lam = 1
    H = build_H(ProxPenalty.l1(1.0), B, SpdOperator.identity(2), x, 1.0)
    for _ in range(10):
        v = rng.standard_normal(2)
        a = v + (x - v)
        assert np.allclose(H(v), a - prox_l1(a, 1.0))


def test_H_nonexpansive(rng):
    pens = [ProxPenalty.l1(0.7), ProxPenalty.l2(0.7), ProxPenalty.linf(0.7), ProxPenalty.lp_norm(3, 0.7)]
    for k in range(100):
        d, m = rng.integers(1, 8, size=2)
        B = LinearOperator.from_matrix(rng.standard_normal((m, d)))
        spec = gram_spectrum(B)
        lam = rng.uniform(0.05, 1.0) * 2 / spec.lambda_max
        H = build_H(pens[k % 4], B, None, rng.standard_normal(d), lam, spec)
        v, w = rng.standard_normal(m), rng.standard_normal(m)
        assert np.linalg.norm(H(v) - H(w)) <= np.linalg.norm(v - w) + 1e-12


def test_prox_composite_examples():
    u, st = prox_composite(ProxPenalty.l1(1.0), LinearOperator.identity(3), [3.0, -1.0, 0.5])
    assert np.allclose(u, [2, 0, 0], atol=1e-9) and st.converged
    u, _ = prox_composite(ProxPenalty.l1(0.0), fused_difference_operator(3), [3.0, -1.0, 0.5])
    assert np.array_equal(u, [3, -1, 0.5])
    B = LinearOperator.from_matrix(np.array([[1.0, -1.0]]))
    u, st = prox_composite(ProxPenalty.l1(0.5), B, [1.0, 0.0])
    assert np.allclose(u, [0.5, 0.5], atol=1e-9)
    assert composite_residual(ProxPenalty.l1(0.5), B, [1.0, 0.0], u, st.v, st.lam) <= 1e-9


def test_prox_composite_certificate_closed_form(rng):
    """x - u must equal B'g with g a subgradient of w at Bu (l1 and l2 cases)."""
    for _ in range(30):
        d = int(rng.integers(2, 8))
        B = fused_difference_operator(d)
        x = rng.standard_normal(d) * 2
        tol = 1e-11
        for pen in (ProxPenalty.l1(0.4), ProxPenalty.l2(0.4)):
            u, st = prox_composite(pen, B, x, tol=tol, max_iter=100000)
            g = st.lam * st.v
            assert np.linalg.norm(x - u - B.rapply(g)) <= 10 * tol + 1e-12
            z = B.apply(u)
            if pen.kind == "l1":
                nz = np.abs(z) > 1e-9
                assert np.allclose(g[nz], 0.4 * np.sign(z[nz]), atol=1e-7)
                assert np.all(np.abs(g) <= 0.4 + 1e-7)
            else:
                if np.linalg.norm(z) > 1e-9:
                    assert np.allclose(g, 0.4 * z / np.linalg.norm(z), atol=1e-7)
                else:
                    assert np.linalg.norm(g) <= 0.4 + 1e-7


def test_strict_contraction_pure_picard_agrees(rng):
    for _ in range(20):
        d = int(rng.integers(3, 7))
        m = d - 1
        B = LinearOperator.from_matrix(rng.standard_normal((m, d)))
        spec = gram_spectrum(B)
        assert spec.lambda_min > 0
        lam = 1.0 / spec.lambda_max
        x = rng.standard_normal(d)
        pen = ProxPenalty.l2(0.3)
        u0, s0 = prox_composite(pen, B, x, lam=lam, kappa=0.0, tol=1e-13, max_iter=100000)
        u1, s1 = prox_composite(pen, B, x, lam=lam, kappa=0.2, tol=1e-13, max_iter=100000)
        assert s0.converged and s1.converged
        assert np.allclose(u0, u1, atol=1e-8)


def test_brute_force_minimality(rng):
    for _ in range(10):
        d, m = rng.integers(1, 5, size=2)
        B = LinearOperator.from_matrix(rng.standard_normal((m, d)))
        x = rng.standard_normal(d)
        pen = ProxPenalty.l1(0.5)
        u, _ = prox_composite(pen, B, x, tol=1e-12, max_iter=100000)
        M = B.to_dense()

        def F(Y):
            return 0.5 * ((Y - x) ** 2).sum(axis=1) + 0.5 * np.abs(Y @ M.T).sum(axis=1)

        cand = np.vstack([u + rng.normal(scale=s, size=(2500, d)) for s in (1e-4, 1e-2, 1e-1, 1.0)])
        assert F(u[None])[0] <= F(cand).min() + 1e-12


def test_closed_form_consistency_sample(rng):
    pens = [ProxPenalty.l1(0.6), ProxPenalty.l2(0.6), ProxPenalty.linf(0.6), ProxPenalty.lp_power(3, 0.6),
            ProxPenalty.lp_norm(3, 0.6), ProxPenalty.group_l2([0, 2, 5], 0.6)]
    for pen in pens:
        for _ in range(10):
            x = rng.standard_normal(5) * 2
            u, _ = prox_composite(pen, LinearOperator.identity(5), x)
            assert np.allclose(u, pen.prox(x), atol=1e-8)


def test_warm_start_reduces_iterations(rng):
    B = fused_difference_operator(30)
    x = np.cumsum(rng.standard_normal(30))
    pen = ProxPenalty.l1(0.5)
    u, st = prox_composite(pen, B, x)
    u2, st2 = prox_composite(pen, B, x + 1e-6 * rng.standard_normal(30), warm_start=st)
    assert st2.iterations < st.iterations
    with pytest.raises(DimensionError):
        prox_composite(pen, B, x, warm_start=np.zeros(3))


def test_inadmissible_step_reports_interval():
    B = fused_difference_operator(3)
    with pytest.raises(InadmissibleStepError) as err:
        prox_composite(ProxPenalty.l1(), B, [1.0, 2.0, 3.0], lam=1.0)
    assert err.value.upper == pytest.approx(2 / 3, rel=1e-8)
    assert "admissible" in str(err.value)
    with pytest.raises(InadmissibleStepError):
        check_lam(0.0, SpectralInterval(1.0, 1.0))


def test_default_lam_rule():
    assert default_lam(SpectralInterval(3.0, 1.0)) == pytest.approx(0.5, rel=1e-8)
    assert default_lam(SpectralInterval(4.0, 0.0)) <= 0.5
    assert default_lam(SpectralInterval(4.0, 0.0)) == pytest.approx(0.5, rel=1e-8)


def test_gram_spectrum_incidence_is_singular():
    g = Graph(4, ((0, 1), (1, 2), (2, 3), (0, 3)))
    spec = gram_spectrum(incidence_operator(g))
    assert spec.lambda_min == 0.0
    assert spec.lambda_max == pytest.approx(4.0, rel=1e-8)


def test_quad_min_examples():
    B = LinearOperator.identity(2)
    u = quad_min_composite(ProxPenalty.l1(0.0), B, SpdOperator.diagonal([2.0, 4.0]), [2.0, 4.0])
    assert np.allclose(u, [1, 1])
    u = quad_min_composite(ProxPenalty.l1(1.0), B, SpdOperator.diagonal([2.0, 1.0]), [3.0, 0.5], tol=1e-12)
    assert np.allclose(u, [1, 0], atol=1e-9)
    u = quad_min_composite(ProxPenalty.l1(1.0), B, SpdOperator.dense([[2.0, 0.0], [0.0, 1.0]]), [3.0, 0.5],
                           tol=1e-12)
    assert np.allclose(u, [1, 0], atol=1e-9)


def test_quad_min_identity_matches_prox(rng):
    B = fused_difference_operator(6)
    x = rng.standard_normal(6)
    pen = ProxPenalty.l1(0.3)
    u1 = quad_min_composite(pen, B, SpdOperator.identity(6), x, tol=1e-12, max_iter=10000)
    u2, _ = prox_composite(pen, B, x, tol=1e-12, max_iter=10000)
    assert np.allclose(u1, u2, atol=1e-9)


def test_quad_min_general_Q_kkt(rng):
    for _ in range(10):
        d = 4
        R = rng.standard_normal((d, d))
        Q = R @ R.T + d * np.eye(d)
        B = LinearOperator.from_matrix(rng.standard_normal((3, d)))
        x = rng.standard_normal(d) * 3
        pen = ProxPenalty.l2(0.5)
        u, st = quad_min_composite(pen, B, SpdOperator.dense(Q), x, tol=1e-12, max_iter=100000,
                                   return_state=True)
        assert st.converged
        # stationarity: Q u - x + B'g = 0 with g the scaled fixed point
        g = st.lam * st.v
        assert np.allclose(Q @ u - x + B.rapply(g), 0, atol=1e-8)
        assert np.linalg.norm(g) <= 0.5 + 1e-8
