import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kreinkg.calculus import (AlmostAnalyticExtension, ErfPlateau, Gaussian, Pole,
                              PolynomialFunction, SampledFunction, calculus_norm_fit,
                              eigen_oracle_calculus, evolve, growth_fit, hs_calculus,
                              spectral_projection)
from kreinkg.errors import ConditioningError, ContourError
from kreinkg.krein import KreinOperator, KreinSpace
from kreinkg.models import Grid1D, PotentialSpec, build_flat_model
from kreinkg.operators import build_H, build_K

EXACT = 1e-12
ORACLE_TOL = 1e-8
HS_AGREE_TOL = 1e-6
HOMOMORPHISM_TOL = 1e-6
IDEMPOTENCY_TOL = 1e-8
ORTHOGONALITY_TOL = 1e-8
SPLIT_RTOL = 1e-6
RATE_TOL = 0.05
POLY_EXPONENT_MAX = 0.1


def op(M, gram=None):
    M = np.asarray(M, dtype=complex)
    return KreinOperator(M, KreinSpace(np.eye(len(M)) if gram is None else gram))


@pytest.fixture(scope="module")
def small_H():
    pot = PotentialSpec(kind="gaussian", v0=0.3)
    return build_H(build_flat_model(Grid1D(16, 3.0), pot)).operator


@pytest.fixture(scope="module")
def free_H():
    return build_H(build_flat_model(Grid1D(40, 6.0), PotentialSpec(v0=0.0, m=1.0))).operator


@pytest.fixture(scope="module")
def free_K():
    return build_K(build_flat_model(Grid1D(40, 6.0), PotentialSpec(v0=0.0, m=1.0))).operator


# ---------------------------------------------------------------- extensions

def test_extension_restricts_to_phi():
    phi = Gaussian(0.3, 0.7)
    ext = AlmostAnalyticExtension(phi, 3, 0.5)
    x = np.linspace(-2, 2, 41)
    assert np.allclose(ext(x + 0j), phi(x), atol=EXACT)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_extension_dbar_order(N):
    ext = AlmostAnalyticExtension(Gaussian(0.0, 1.0), N, 10.0)
    x = np.linspace(-3, 3, 61)
    ys = np.array([1e-2, 2e-2])
    vals = [np.abs(ext.dbar(x, np.full_like(x, y))).max() for y in ys]
    slope = np.log(vals[1] / vals[0]) / np.log(2)
    assert slope == pytest.approx(N, abs=0.05)


def test_sampled_derivatives():
    g = Gaussian(0.2, 0.8)
    s = SampledFunction(g, support=g.support)
    x = np.linspace(-1, 1, 11)
    D, E = g.derivs(x, 2), s.derivs(x, 2)
    assert np.allclose(D[1], E[1], atol=1e-7) and np.allclose(D[2], E[2], atol=1e-4)


# ---------------------------------------------------------------- eigen oracle

def test_oracle_identity_and_one(small_H):
    M = small_H.matrix
    ident = eigen_oracle_calculus(small_H, lambda x: x).matrix
    assert np.linalg.norm(ident - M) <= EXACT * np.linalg.norm(M) * 100
    one = eigen_oracle_calculus(small_H, lambda x: np.ones_like(x)).matrix
    assert np.allclose(one, np.eye(len(M)), atol=1e-10)


def test_oracle_polynomial():
    A = np.array([[0, 1], [-2, 2]])
    res = eigen_oracle_calculus(op(A), lambda x: x ** 2)
    assert np.allclose(res.matrix, A @ A, atol=EXACT)
    assert res.method == "eigen_oracle" and res.eigenvector_condition >= 1


def test_oracle_refuses_defective():
    with pytest.raises(ConditioningError):
        eigen_oracle_calculus(op([[0, 1], [0, 0]], [[0, 1], [1, 0]]), lambda x: x)


# ---------------------------------------------------------------- Helffer-Sjostrand

def test_hs_diagonal():
    phi = Gaussian(2.0, 1.0)
    res = hs_calculus(op(np.diag([3.0, -1.0])), phi)
    assert np.allclose(res.matrix, np.diag([phi(3.0), phi(-1.0)]), atol=ORACLE_TOL)
    assert res.method == "hs_quadrature" and np.isfinite(res.error_estimate)


def test_hs_matches_oracle(small_H):
    phi = Gaussian(1.5, 0.6)
    hs = hs_calculus(small_H, phi).matrix
    ref = eigen_oracle_calculus(small_H, phi).matrix
    assert np.linalg.norm(hs - ref, 2) <= HS_AGREE_TOL


def test_hs_resolvent_reproduction():
    A = op(np.diag([0.5, 1.0, 2.0]) + 0.1 * np.triu(np.ones((3, 3)), 1))
    window = ErfPlateau(-1.0, 3.5, 0.2)
    phi = Pole(1j) * window
    res = hs_calculus(A, phi)
    ref = np.linalg.inv(A.matrix - 1j * np.eye(3))
    assert np.linalg.norm(res.matrix - ref, 2) <= HS_AGREE_TOL


def test_hs_homomorphism():
    A = op(np.diag([1.2, 1.6, 2.1]) + 0.2 * np.triu(np.ones((3, 3)), 1))
    f, g = Gaussian(1.4, 0.6), Gaussian(1.8, 0.7)
    F = hs_calculus(A, f).matrix
    G = hs_calculus(A, g).matrix
    FG = hs_calculus(A, f * g).matrix
    assert np.linalg.norm(FG - F @ G, 2) <= HOMOMORPHISM_TOL


def test_adjoint_compatibility(small_H):
    phi = Gaussian(1.5, 0.6)
    F = eigen_oracle_calculus(small_H, phi).matrix
    G = small_H.space.gram
    adj = np.linalg.solve(G, F.conj().T @ G)
    assert np.linalg.norm(adj - F, 2) <= HOMOMORPHISM_TOL


def test_norm_bound_fit(free_H):
    fit = calculus_norm_fit(free_H, [Gaussian(c, 0.5) for c in (1.2, 1.6, 2.0, -1.5)], m=2)
    assert np.all(fit.ratios <= fit.constant) and np.isfinite(fit.constant)


# ---------------------------------------------------------------- projections

def test_projection_diagonal():
    E, kind = spectral_projection(op(np.diag([3.0, -1.0])), (2.0, 4.0))
    assert np.allclose(E, np.diag([1.0, 0.0]), atol=IDEMPOTENCY_TOL) and kind == "positive"


def test_projection_free_positive(free_H):
    E, kind = spectral_projection(free_H, (1.2, 1.5))
    assert np.linalg.norm(E @ E - E, 2) <= IDEMPOTENCY_TOL
    assert kind == "positive"


def test_projection_charge_signs(free_K):
    assert spectral_projection(free_K, (1.2, 1.5))[1] == "positive"
    assert spectral_projection(free_K, (-1.5, -1.2))[1] == "negative"


def test_projection_jordan_indefinite():
    E, kind = spectral_projection(op([[0, 1], [0, 0]], [[0, 1], [1, 0]]), (-0.5, 0.5))
    assert np.allclose(E, np.eye(2), atol=IDEMPOTENCY_TOL) and kind == "indefinite"


def test_projection_orthogonal_ranges(free_H):
    E1, _ = spectral_projection(free_H, (1.2, 1.5))
    E2, _ = spectral_projection(free_H, (1.6, 2.2))
    G = free_H.space.gram
    cross = E1.conj().T @ G @ E2
    assert np.linalg.norm(cross, 2) <= ORTHOGONALITY_TOL * max(1.0, np.linalg.norm(G, 2))


def test_projection_endpoint_error():
    with pytest.raises(ContourError):
        spectral_projection(op(np.diag([3.0, -1.0])), (3.0, 4.0))


# ---------------------------------------------------------------- dynamics

def test_evolve_zero_time(small_H):
    f = np.arange(small_H.dim, dtype=complex)
    assert np.array_equal(evolve(small_H, 0.0, f), f)


def test_growth_rate_complex_pair():
    A = op([[0, 1], [-2, 2]])
    fit = growth_fit(A, np.linspace(0, 10, 101), f=np.array([1.0, 0.0]))
    assert fit.exp_rate == pytest.approx(1.0, abs=RATE_TOL)


def test_growth_bounded_real_spectrum(free_H):
    fit = growth_fit(free_H, np.linspace(0, 100, 101))
    assert np.isfinite(fit.norms).all()
    assert fit.poly_exponent <= POLY_EXPONENT_MAX


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_split_matches_oracle(t):
    pot = PotentialSpec(kind="gaussian", v0=5.0)
    H = build_H(build_flat_model(Grid1D(32, 6.0), pot)).operator
    f = np.random.default_rng(0).normal(size=H.dim).astype(complex)
    a = evolve(H, t, f, "oracle")
    b = evolve(H, t, f, "split")
    assert np.linalg.norm(a - b) <= SPLIT_RTOL * np.linalg.norm(a)


@settings(max_examples=15, deadline=None)
@given(c=st.floats(-3, 3), w=st.floats(0.3, 2.0), a=st.floats(-2, 2))
def test_oracle_diagonal_property(c, w, a):
    phi = Gaussian(c, w)
    d = np.array([a, a + 1.0, a - 2.5])
    res = eigen_oracle_calculus(op(np.diag(d)), phi).matrix
    assert np.allclose(res, np.diag(phi(d)), atol=EXACT)


def test_polynomial_function_derivatives():
    p = PolynomialFunction([1.0, 0.0, 3.0])
    D = p.derivs(np.array([2.0]), 2)
    assert D[:, 0].tolist() == [13.0, 12.0, 6.0]
