import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kreinkg.errors import ResolventSetError, SplittingError
from kreinkg.krein import (KreinOperator, krein_adjoint, pontryagin_negative_rank,
                           selfadjoint_defect, suggest_definitizing)
from kreinkg.models import Grid1D, PotentialSpec, build_flat_model, split_k
from kreinkg.operators import (KGPair, Pencil, build_diagonalization, build_H, build_K,
                               build_Phi, check_conditions_E, energy_charge_identity,
                               fit_resolvent_bound, in_rho, pencil_eval, resolvent_H,
                               resolvent_K)

EXACT = 1e-12
RESOLVENT_RTOL = 1e-10
SPECTRUM_TOL = 1e-8


def scalar(h, k):
    return KGPair(np.array([[h]]), np.array([[k]]))


def random_pair(rng, n, shift=0.0):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Y = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return KGPair(X @ X.conj().T + shift * np.eye(n), 0.3 * (Y + Y.conj().T))


@pytest.fixture(scope="module")
def gaussian_model():
    pot = PotentialSpec(kind="gaussian", v0=0.8, width=1.0, m=1.0)
    return build_flat_model(Grid1D(48, 8.0), pot)


# ---------------------------------------------------------------- pencil

@pytest.mark.parametrize("h, k, z, val", [(4, 0, 2, 0), (3, 1, 0, 3), (-2, 1, 1 + 1j, 0)])
def test_pencil_values(h, k, z, val):
    assert abs(pencil_eval(scalar(h, k), z)[0, 0] - val) < EXACT


def test_pencil_cache_and_adjoint():
    rng = np.random.default_rng(0)
    pen = Pencil(random_pair(rng, 4))
    z = 0.3 + 0.7j
    P = pen(z)
    assert pen(z) is P
    assert np.allclose(pen(z).conj().T, pen(z.conjugate()), atol=EXACT)


def test_in_rho_examples():
    p = scalar(3, 1)
    assert not in_rho(p, 3)
    assert in_rho(p, 1j)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_rho_equivalence(seed):
    rng = np.random.default_rng(seed)
    pair = random_pair(rng, 3, shift=-1.0)
    H, K = build_H(pair).matrix, build_K(pair).matrix
    for z in rng.normal(size=50) + 1j * rng.normal(size=50) * 0.5:
        r = in_rho(pair, z)
        assert r == in_rho(pair, np.conj(z))
        sH = np.linalg.svd(H - z * np.eye(6), compute_uv=False)
        sK = np.linalg.svd(K - z * np.eye(6), compute_uv=False)
        if r:
            assert sH[-1] > 0 and sK[-1] > 0


def test_rho_contains_cone():
    rng = np.random.default_rng(1)
    pair = random_pair(rng, 4, shift=-2.0)
    c0 = np.abs(np.linalg.eigvals(build_H(pair).matrix)).max()
    for t in np.linspace(0, 2 * np.pi, 40):
        x = 3 * np.cos(t)
        assert in_rho(pair, x + 1j * (abs(x) + c0 + 0.1))


# ---------------------------------------------------------------- generators

def test_hand_fixtures():
    pair = scalar(-2, 1)
    H, K, Phi = build_H(pair).matrix, build_K(pair).matrix, build_Phi(pair)
    assert np.allclose(H, [[0, 1], [-2, 2]], atol=EXACT)
    assert np.allclose(K, [[1, 1], [-1, 1]], atol=EXACT)
    assert np.allclose(Phi, [[1, 0], [1, 1]], atol=EXACT)
    assert np.allclose(H @ Phi, [[1, 1], [0, 2]], atol=EXACT)
    assert np.allclose(Phi @ K, [[1, 1], [0, 2]], atol=EXACT)
    assert np.allclose(resolvent_K(pair, 0), [[0.5, -0.5], [0.5, 0.5]], atol=EXACT)
    assert np.allclose(build_Phi(pair, inverse=True) @ Phi, np.eye(2), atol=EXACT)


def test_k_zero_gives_equal_generators():
    pair = KGPair(np.diag([2.0, 5.0]), np.zeros((2, 2)))
    assert np.allclose(build_H(pair).matrix, build_K(pair).matrix)
    assert np.allclose(build_Phi(pair), np.eye(4))


def test_spectrum_is_pencil_roots():
    ev = np.sort(np.linalg.eigvals(build_H(scalar(3, 1)).matrix).real)
    assert np.allclose(ev, [-1, 3], atol=EXACT)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 5))
def test_structural_identities(seed, n):
    rng = np.random.default_rng(seed)
    pair = random_pair(rng, n, shift=-0.5)
    if np.abs(pair.scale.eigenvalues).min() < 1e-3:
        return
    H, K = build_H(pair), build_K(pair)
    Phi = build_Phi(pair)
    assert np.linalg.norm(H.matrix @ Phi - Phi @ K.matrix) <= EXACT * max(1, np.linalg.norm(H.matrix))
    assert selfadjoint_defect(H.operator) <= 1e-10
    assert selfadjoint_defect(K.operator) <= 1e-10
    a = np.sort_complex(np.round(np.linalg.eigvals(H.matrix), 6))
    b = np.sort_complex(np.round(np.linalg.eigvals(K.matrix), 6))
    assert np.allclose(a, b, atol=1e-5)


# ---------------------------------------------------------------- resolvents

def test_resolvent_scalar_example():
    pair = scalar(3, 0)
    ref = np.linalg.inv(build_H(pair).matrix - 1j * np.eye(2))
    assert np.linalg.norm(resolvent_H(pair, 1j) - ref) / np.linalg.norm(ref) <= 1e-14


def test_resolvent_formulas_model(gaussian_model):
    rng = np.random.default_rng(4)
    pair = gaussian_model
    H, K = build_H(pair).matrix, build_K(pair).matrix
    for z in rng.uniform(-3, 3, 10) + 1j * rng.uniform(0.05, 1, 10):
        for M, f in ((H, resolvent_H), (K, resolvent_K)):
            ref = np.linalg.inv(M - z * np.eye(M.shape[0]))
            assert np.linalg.norm(f(pair, z) - ref, 2) <= RESOLVENT_RTOL * np.linalg.norm(ref, 2)


def test_resolvent_conjugation():
    pair = scalar(-2, 1)
    z = 0.4 + 0.3j
    H = build_H(pair)
    R = KreinOperator(resolvent_H(pair, z), H.space)
    assert np.allclose(krein_adjoint(R).matrix, resolvent_H(pair, np.conj(z)), atol=EXACT)


def test_resolvent_set_error():
    with pytest.raises(ResolventSetError) as info:
        resolvent_H(scalar(3, 1), 3.0)
    assert info.value.smallest_singular_value is not None and info.value.smallest_singular_value < 1e-12
    with pytest.raises(ResolventSetError):
        resolvent_K(scalar(-2, 1), 1 + 1j)


# ---------------------------------------------------------------- energy / charge

def test_energy_charge_examples():
    pair = KGPair(np.diag([2.0, 5.0]), np.zeros((2, 2)))
    E, q = energy_charge_identity(pair, [1, 0, 0, 0])
    assert E == pytest.approx(2.0) and q == pytest.approx(2.0)
    E, q = energy_charge_identity(pair, [0, 0, 1, 0])
    assert E == pytest.approx(1.0) and q == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_energy_charge_random(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=2) + 1j * rng.normal(size=2)
    E, q = energy_charge_identity(scalar(-2, 1), f)
    assert abs(E - q) <= 1e-13 * max(1.0, abs(E))


# ---------------------------------------------------------------- conditions

def test_conditions_examples():
    c = check_conditions_E(KGPair(np.diag([4.0, -1.0]), np.zeros((2, 2))))
    assert (c.E1, c.E2, c.E3) == (1.0, 1, 0.0)
    c = check_conditions_E(scalar(-2, 1))
    assert c.E1 == 2 and c.E2 == 1 and c.E3 == pytest.approx(2 ** -0.5)


def test_free_model_positive():
    pair = build_flat_model(Grid1D(32, 5.0), PotentialSpec(v0=0.0))
    assert check_conditions_E(pair).E2 == 0


def test_pontryagin_matches_E2_and_definitizes():
    pair = build_flat_model(Grid1D(24, 4.0), PotentialSpec(kind="gaussian", v0=5.0))
    H = build_H(pair)
    assert pontryagin_negative_rank(H.space) == check_conditions_E(pair).E2 > 0
    assert any(c.verified for c in suggest_definitizing(H.operator))


def test_resolvent_bound_fit(gaussian_model):
    zs = [x + 1j * y for x in (-2.0, -0.7, 0.6, 2.1) for y in (0.1, 0.5)]
    fit = fit_resolvent_bound(gaussian_model, zs)
    assert np.isfinite(fit.constant) and fit.constant > 0
    assert np.all(fit.dual_norms <= fit.constant * (1 + fit.energy_norms) * (1 + 1e-12))


# ---------------------------------------------------------------- diagonalization

def test_diagonalization_scalar():
    pair = KGPair(np.array([[4.0]]), np.array([[0.0]]))
    D = build_diagonalization(pair, np.zeros((1, 1)))
    assert np.allclose(D.b, [[2.0]])
    assert np.allclose(D.U, np.array([[2, 1], [2, -1]]) / np.sqrt(2))
    assert np.allclose(D.U @ build_H(pair).matrix @ D.U_inv, np.diag([2.0, -2.0]), atol=EXACT)


def test_diagonalization_no_remainder():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(3, 3))
    Y = rng.normal(size=(3, 3))
    pair = KGPair(X @ X.T + np.eye(3), Y + Y.T)
    D = build_diagonalization(pair, pair.k)
    assert np.allclose(D.r, 0) and np.allclose(D.V2, 0)


def test_diagonalization_model(gaussian_model):
    pair = gaussian_model
    k1, k2 = split_k(pair, 5.0)
    D = build_diagonalization(pair, k1, k2)
    nH = np.linalg.norm(build_H(pair).matrix, 2)
    assert D.residual <= 1e-10 * nH
    assert D.form_residual <= 1e-10 * nH
    assert np.allclose(D.b @ D.b - D.r, pair.h, atol=1e-10 * nH)


def test_splitting_error():
    pair = KGPair(np.array([[1.0]]), np.array([[3.0]]))
    with pytest.raises(SplittingError):
        build_diagonalization(pair, np.array([[10.0]]), np.array([[-7.0]]))
