import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kreinkg.calculus import eigen_oracle_calculus
from kreinkg.errors import PreconditionError, ResolventSetError, SamplingError
from kreinkg.estimates import (blowup_fit, conjugate_weight_ratio, forbidden_points, lap_scan,
                               mourre_c1_prediction, mourre_check, mourre_experiment,
                               pencil_lap, pencil_weighted_norm, propagation_bound_constant,
                               propagation_integral, plancherel_outside,
                               weighted_resolvent_norm, weight_vector)
from kreinkg.krein import KreinOperator, KreinSpace
from kreinkg.models import Grid1D, PotentialSpec, ReferenceWeight, Window, build_flat_model
from kreinkg.operators import KGPair, build_H, build_K

ORACLE_RTOL = 1e-8
FORM_HERMITIAN_TOL = 1e-10
PLANCHEREL_RTOL = 1e-3
EXPONENT_TOL = 0.1
PENCIL_RATIO_RANGE = (0.1, 10.0)
RANK_BUDGET = 8
INTERVAL = (1.2, 1.5)
DELTA = 0.6
FREE = PotentialSpec(v0=0.0, m=1.0)


@pytest.fixture(scope="module")
def free_pair():
    return build_flat_model(Grid1D(80, 8.0), FREE)


@pytest.fixture(scope="module")
def free_H(free_pair):
    return build_H(free_pair)


def oracle_weighted_norm(op, z, delta, weight):
    """``|W (op - z)^{-1} W|`` via a diagonalization, in the space's Hilbert norm."""
    M, G = op.matrix, op.space.hilbert_gram
    w = weight_vector(weight, M.shape[0], delta)
    R = eigen_oracle_calculus(M, lambda l: 1.0 / (l - z)).matrix
    X = w[:, None] * R * w[None, :]
    C = np.linalg.cholesky(G).conj().T
    return np.linalg.norm(C @ X @ np.linalg.inv(C), 2)


# ---------------------------------------------------------------- weighted resolvent

def test_unweighted_is_plain_norm():
    M = np.array([[1.0, 2.0], [0.0, 3.0]])
    op = KreinOperator(M, KreinSpace(np.eye(2)))
    z = 0.5 + 0.5j
    assert weighted_resolvent_norm(op, z, 0.0) == pytest.approx(
        np.linalg.norm(np.linalg.inv(M - z * np.eye(2)), 2), rel=1e-12)


def test_weighted_matches_oracle(free_H, free_pair):
    w = ReferenceWeight(free_pair.model.grid)
    z = 1.3 + 0.05j
    got = weighted_resolvent_norm(free_H, z, DELTA, w)
    assert np.isfinite(got)
    assert got == pytest.approx(oracle_weighted_norm(free_H, z, DELTA, w), rel=ORACLE_RTOL)


def test_conjugation_symmetry(free_H, free_pair):
    w = ReferenceWeight(free_pair.model.grid)
    c = np.sqrt(free_H.space.gram_condition)
    for z in (1.3 + 0.05j, 0.4 + 0.3j, -1.7 + 0.1j):
        r = weighted_resolvent_norm(free_H, z, DELTA, w) / weighted_resolvent_norm(
            free_H, np.conj(z), DELTA, w)
        assert 1 / c <= r <= c


def test_resolvent_on_spectrum():
    op = KreinOperator(np.diag([1.0, 2.0]), KreinSpace(np.eye(2)))
    with pytest.raises(ResolventSetError):
        weighted_resolvent_norm(op, 1.0, 0.0)


# ---------------------------------------------------------------- LAP scans

def test_lap_scan_table(free_H, free_pair):
    w = ReferenceWeight(free_pair.model.grid)
    scan = lap_scan(free_H, INTERVAL, DELTA, (0.2, 0.1, 0.05), w, n_re=9, verify=4)
    assert scan.table.shape == (3, 9) and np.isfinite(scan.table).all()
    assert scan.verification <= ORACLE_RTOL
    assert scan.stability_ratio >= 1.0
    assert scan.sup == pytest.approx(scan.sup_per_eps.max())


def test_lap_scan_workers_bitwise(free_H, free_pair):
    w = ReferenceWeight(free_pair.model.grid)
    a = lap_scan(free_H, INTERVAL, DELTA, (0.2, 0.1), w, n_re=7, workers=1, verify=0)
    b = lap_scan(free_H, INTERVAL, DELTA, (0.2, 0.1), w, n_re=7, workers=3, verify=0)
    assert np.array_equal(a.table, b.table)


def test_lap_ladder_validation(free_H):
    with pytest.raises(ValueError):
        lap_scan(free_H, INTERVAL, DELTA, (0.05, 0.1))


def test_lap_rejects_eigenvalue():
    pair = build_flat_model(Grid1D(48, 8.0), PotentialSpec(kind="gaussian", v0=-1.5))
    with pytest.raises(PreconditionError, match="eigenvalue"):
        lap_scan(build_H(pair), (0.05, 0.9), DELTA, (0.1,), n_re=5)


def test_lap_rejects_threshold(free_H):
    with pytest.raises(PreconditionError, match="threshold"):
        lap_scan(free_H, (0.9, 1.3), DELTA, (0.01,), n_re=5)


def test_forbidden_points_plain_matrix():
    op = KreinOperator(np.diag([1.0, 3.0]), KreinSpace(np.eye(2)))
    pts = forbidden_points(op, (0.5, 1.5), 0.1)
    assert [r for _, r in pts] == ["eigenvalue"]


def test_conjugate_weight_ratio_finite(free_pair):
    from kreinkg.estimates import mourre_setup
    L, A, G = mourre_setup(free_pair.model.grid, FREE, Window(1.0, 3.0, 0.3))
    r = conjugate_weight_ratio(L, A, 1.3 + 0.1j, DELTA, G)
    assert np.isfinite(r) and r > 0


# ---------------------------------------------------------------- pencil

def test_pencil_scalar():
    pair = KGPair(np.array([[3.0]]), np.array([[1.0]]))
    val = pencil_weighted_norm(pair, 1j, 0.0)
    assert val == pytest.approx(10 ** 0.25 / np.sqrt(20), rel=1e-12)


def test_pencil_ratio(free_pair):
    w = ReferenceWeight(free_pair.model.grid)
    res = pencil_lap(free_pair, INTERVAL, DELTA, 0.1, w, n_re=9)
    assert np.isfinite(res.pencil_sup) and np.isfinite(res.energy_sup)
    assert PENCIL_RATIO_RANGE[0] <= res.ratio <= PENCIL_RATIO_RANGE[1]


def test_pencil_zero_in_interval(free_pair):
    with pytest.raises(PreconditionError):
        pencil_lap(free_pair, (-0.5, 0.5), DELTA, 0.1)


@settings(max_examples=20, deadline=None)
@given(x=st.floats(-3, 3), y=st.floats(0.05, 2.0))
def test_pencil_unweighted_degenerates(x, y):
    h, k = np.diag([2.0, 5.0]), np.diag([0.3, -0.4])
    pair = KGPair(h, k)
    z = x + 1j * y
    hd, kd = np.diag(h), np.diag(k)
    p = hd - z * z + 2 * kd * z
    ref = np.max((1 + hd ** 2) ** 0.25 / np.abs(p))
    assert pencil_weighted_norm(pair, z, 0.0) == pytest.approx(ref, rel=1e-10)


# ---------------------------------------------------------------- Mourre

def test_mourre_zero_window(free_pair):
    from kreinkg.estimates import mourre_setup
    L, A, G = mourre_setup(free_pair.model.grid, FREE, Window(1.0, 3.0, 0.3))
    f = Window(50.0, 60.0, 1.0)
    rep = mourre_check(L, A, f, 0.3, G)
    assert rep.range_dim == 0 and rep.passed(require_positive=True)


def test_mourre_threshold_error(free_pair):
    from kreinkg.estimates import mourre_setup
    L, A, G = mourre_setup(free_pair.model.grid, FREE, Window(1.0, 3.0, 0.3))
    with pytest.raises(PreconditionError):
        mourre_check(L, A, Window(0.8, 1.4, 0.1), 0.3, G, thresholds=(1.0,))


def test_mourre_c1_prediction():
    assert mourre_c1_prediction((1.2, 1.5), 1.0) == pytest.approx((1.44 - 1) / 1.2)


@pytest.fixture(scope="module")
def gaussian_mourre():
    grid = Grid1D(100, 10.0)
    pot = PotentialSpec(kind="gaussian", v0=0.5)
    f = Window(1.2, 1.5, 0.075)
    return mourre_experiment(grid, pot, Window(1.0, 3.0, 0.3), f,
                             mourre_c1_prediction((1.2, 1.5), 1.0))


def test_mourre_form_hermitian(gaussian_mourre):
    assert gaussian_mourre.hermitian_defect <= FORM_HERMITIAN_TOL


def test_mourre_rank_stable(gaussian_mourre):
    rep = gaussian_mourre
    assert rep.negative_rank == rep.negative_rank_refined
    assert rep.negative_rank <= RANK_BUDGET and rep.passed()


# ---------------------------------------------------------------- propagation

def test_propagation_zero_vector(free_H):
    rep = propagation_integral(free_H, Window(*INTERVAL, 0.075), DELTA, np.zeros(free_H.matrix.shape[0]),
                               0.05)
    assert rep.time_value == 0.0 and rep.plancherel_value == 0.0


def test_propagation_two_level_toy():
    op = KreinOperator(np.diag([1.3, 1.4]), KreinSpace(np.eye(2)))
    chi = Window(1.0, 1.7, 0.1)
    rep = propagation_integral(op, chi, 0.0, np.array([1.0, 1.0]), 0.05)
    # closed form: int e^{-2 eps|t|} |c|^2 dt = 2 / (2 eps) per unit mode
    assert rep.time_value == pytest.approx(2 / 0.05, rel=1e-6)
    assert rep.mismatch <= 1e-6


def test_propagation_free(free_H, free_pair):
    grid = free_pair.model.grid
    s = grid.points
    g = np.exp(-((s + 2.0) / 1.5) ** 2) * np.exp(1.1j * s)
    f = np.concatenate([g, np.zeros_like(g)])
    w = ReferenceWeight(grid)
    chi = Window(*INTERVAL, 0.075)
    eps = 0.05
    rep = propagation_integral(free_H, chi, DELTA, f, eps, weight=w)
    assert rep.time_value >= 0 and rep.plancherel_value >= 0
    assert rep.mismatch <= PLANCHEREL_RTOL
    K, S, _ = propagation_bound_constant(free_H, chi, DELTA, eps, INTERVAL, w)
    assert rep.constant <= S * S * K + plancherel_outside(free_H, chi, DELTA, f, eps, INTERVAL, w)


# ---------------------------------------------------------------- blow-up

def test_blowup_simple_pole():
    op = KreinOperator(np.diag([1.0, 2.0, 3.5]), KreinSpace(np.eye(3)))
    fit = blowup_fit(op, 2.0)
    assert fit.exponent == pytest.approx(1.0, abs=EXPONENT_TOL) and fit.distances.size >= 8


def test_blowup_jordan():
    op = KreinOperator(np.array([[0.0, 1.0], [0.0, 0.0]]),
                       KreinSpace(np.array([[0.0, 1.0], [1.0, 0.0]])))
    fit = blowup_fit(op, 0.0)
    assert fit.exponent == pytest.approx(2.0, abs=EXPONENT_TOL)


def test_blowup_infinity():
    op = KreinOperator(np.diag([1.0, -2.0]), KreinSpace(np.eye(2)))
    fit = blowup_fit(op, np.inf, sample_range=(1e2, 1e4))
    assert fit.slope == pytest.approx(-1.0, abs=EXPONENT_TOL)


def test_blowup_needs_samples():
    op = KreinOperator(np.diag([1.0, 2.0]), KreinSpace(np.eye(2)))
    with pytest.raises(SamplingError):
        blowup_fit(op, 1.0, n_samples=5)
