"""Desk-scale measurements of the resolvent, commutator and propagation estimates.

All scans run over fixed grids and write into preallocated tables, so the
results do not depend on how many worker threads evaluate them.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator

from .calculus import eigen_oracle_calculus
from .errors import (HorizonError, PreconditionError, ResolventSetError,
                     SamplingError)
from .krein import KreinOperator, KreinSpace
from .linalg import (cholesky_upper, hermitian_part, orth_range, spectral_norm,
                     weighted_norm)
from .models import ReferenceWeight
from .operators import (ChargeOperator, EnergyOperator, KGPair, in_rho,
                        pencil_eval, resolvent_H, resolvent_K)

RANK_BUDGET = 8
LEVEL_SPACING_FACTOR = 3.0
MIN_FIT_SAMPLES = 8
HORIZON_TAIL_FRACTION = 0.1
FORM_RTOL = 1e-10


# ---------------------------------------------------------------- helpers

def _unpack(op):
    """``(matrix, space, pair)`` for an energy/charge operator or a KreinOperator."""
    if isinstance(op, (EnergyOperator, ChargeOperator)):
        return op.matrix, op.space, op.pair
    if isinstance(op, KreinOperator):
        return op.matrix, op.space, None
    M = np.asarray(op, dtype=complex)
    return M, KreinSpace(np.eye(M.shape[0])), None


def weight_vector(weight, dim, delta):
    """Diagonal of ``(<x>^{-delta})_diag`` on ``C^dim``.

    ``weight`` may be ``None`` (identity), a :class:`ReferenceWeight`, or the
    values of ``<x>`` on ``dim`` or ``dim/2`` nodes.
    """
    if weight is None or delta == 0:
        return np.ones(dim)
    vals = weight.values if isinstance(weight, ReferenceWeight) else np.asarray(weight, float)
    if vals.size * 2 == dim:
        vals = np.concatenate([vals, vals])
    if vals.size != dim:
        raise ValueError("weight has %d entries, expected %d or %d" % (vals.size, dim, dim // 2))
    return vals ** (-float(delta))


def _resolvent(op, z):
    M, _, pair = _unpack(op)
    if isinstance(op, EnergyOperator):
        return resolvent_H(pair, z)
    if isinstance(op, ChargeOperator):
        return resolvent_K(pair, z)
    A = M - complex(z) * np.eye(M.shape[0])
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= 1e-8 * s[0]:
        raise ResolventSetError("z = %r is (numerically) an eigenvalue" % complex(z), s[-1])
    return np.linalg.inv(A)


def weighted_resolvent_norm(op, z, delta, weight=None, space=None):
    """``|G^{1/2} W (op - z)^{-1} W G^{-1/2}|`` with ``W = (<x>^{-delta})_diag``.

    Energy and charge operators use the pencil formulas for the resolvent;
    ``G`` defaults to the operator's ``hilbert_gram``.
    """
    M, sp, _ = _unpack(op)
    G = (space or sp).hilbert_gram
    w = weight_vector(weight, M.shape[0], delta)
    R = _resolvent(op, z)
    return weighted_norm(w[:, None] * R * w[None, :], G)


class _OracleResolvent:
    """``W (op - z)^{-1} W`` in the Hilbert frame through one diagonalization.

    With ``op = V diag(l) V^{-1}`` and ``G = R^* R`` the weighted resolvent is
    ``P diag(1/(l - z)) Q`` where ``P = R W V`` and ``Q = V^{-1} W R^{-1}``.
    """

    def __init__(self, op, delta, weight=None, space=None):
        M, sp, _ = _unpack(op)
        G = (space or sp).hilbert_gram
        n = M.shape[0]
        w = weight_vector(weight, n, delta)
        lam, V = np.linalg.eig(M)
        Rg = cholesky_upper(G)
        self.lam = lam
        self.P = Rg @ (w[:, None] * V)
        self.Q = np.linalg.solve(V, w[:, None] * np.linalg.inv(Rg))
        self.n = n

    def norm(self, z):
        d = 1.0 / (self.lam - complex(z))
        P, Q = self.P, self.Q
        if self.n < 320:
            return float(np.linalg.norm((P * d) @ Q, 2))
        op = LinearOperator((self.n, self.n), dtype=complex,
                            matvec=lambda x: P @ (d * (Q @ x)),
                            rmatvec=lambda y: Q.conj().T @ (d.conj() * (P.conj().T @ y)))
        return spectral_norm(op)


def _parallel_map(fn, items, workers):
    out = [None] * len(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as ex:
            for i, v in enumerate(ex.map(fn, items)):
                out[i] = v
    else:
        for i, it in enumerate(items):
            out[i] = fn(it)
    return out


def _krein_signs(M, G, lam, V, idx):
    """Sign of ``v^* G v`` for the eigenvectors ``V[:, idx]``."""
    out = []
    for j in idx:
        v = V[:, j] / np.linalg.norm(V[:, j])
        out.append(float(np.real(np.vdot(v, G @ v))))
    return np.array(out)


def forbidden_points(op, interval, margin):
    """Spectral points an LAP window must avoid, with reasons.

    Non-real eigenvalues, real eigenvalues of non-positive Krein type (critical
    candidates), thresholds ``+-m_inf`` and 0.  Real eigenvalues below the
    threshold (``|l| < m_inf``) are bound states and are forbidden too; above
    it they are the box shadow of continuous spectrum.  Without a model every
    real eigenvalue counts.  Eigenvalues are avoided by ``margin``; thresholds
    and 0 only need to lie outside the closed interval.
    """
    M, sp, pair = _unpack(op)
    a, b = interval
    lam, V = np.linalg.eig(M)
    dist = np.hypot(np.maximum(0, np.maximum(a - lam.real, lam.real - b)), lam.imag)
    near = np.flatnonzero(dist <= margin)
    scale = max(1.0, float(np.abs(lam).max()))
    out = []
    if pair is None or pair.m_inf is None:
        m_inf = None
    else:
        m_inf = float(pair.m_inf)
    signs = _krein_signs(M, sp.gram, lam, V, near) if near.size else []
    tol = 1e-8 * np.linalg.norm(sp.gram, 2)
    for j, q in zip(near, signs):
        l = complex(lam[j])
        if abs(l.imag) > 1e-8 * scale:
            out.append((l, "non-real eigenvalue"))
        elif m_inf is None or abs(l.real) < m_inf:
            out.append((l, "eigenvalue"))
        elif q <= tol:
            out.append((l, "critical candidate (non-positive Krein type)"))
    pts = [0.0]
    if m_inf is not None:
        pts += [m_inf, -m_inf]
    for t in pts:
        if a <= t <= b:
            out.append((complex(t), "threshold" if t else "zero"))
    return out


def mean_level_spacing(op, interval):
    M, _, _ = _unpack(op)
    lam = np.linalg.eigvals(M)
    a, b = interval
    cnt = int(np.sum((lam.real >= a) & (lam.real <= b) & (np.abs(lam.imag) < 1e-8)))
    return (b - a) / cnt if cnt else np.inf


# ---------------------------------------------------------------- LAP

@dataclass(frozen=True, eq=False)
class LapScan:
    interval: tuple
    delta: float
    eps_ladder: np.ndarray
    re_grid: np.ndarray
    table: np.ndarray
    level_spacing: float
    verification: float = np.nan

    @property
    def sup(self):
        return float(self.table.max())

    @property
    def sup_per_eps(self):
        return self.table.max(axis=1)

    @property
    def stability_ratio(self):
        """Sup over the whole ladder divided by the sup at the largest ``eps``."""
        return self.sup / float(self.table[0].max())

    @property
    def spacing_ok(self):
        """Every rung at least ``3 x`` the mean level spacing in the interval."""
        return bool(self.eps_ladder.min() >= LEVEL_SPACING_FACTOR * self.level_spacing)


def lap_scan(op, interval, delta, eps_ladder, weight=None, n_re=31, workers=1, verify=3,
             space=None):
    """Sup of the weighted resolvent over ``Re z in I``, ``Im z = eps``.

    Values come from one diagonalization of the operator; ``verify`` points
    (spread over the table) are recomputed through the resolvent formula
    and the largest relative deviation is stored in ``verification``.
    """
    eps = np.asarray(eps_ladder, float)
    if eps.ndim != 1 or eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps ladder must be strictly decreasing positive numbers")
    a, b = float(interval[0]), float(interval[1])
    bad = forbidden_points(op, (a, b), 2 * eps.max())
    if bad:
        l, why = bad[0]
        raise PreconditionError("interval [%g, %g] (margin %.3g) meets %s at %s"
                                % (a, b, 2 * eps.max(), why, _fmt(l)))
    eng = _OracleResolvent(op, delta, weight, space)
    re = np.linspace(a, b, n_re)
    pts = [(i, j) for i in range(eps.size) for j in range(n_re)]
    vals = _parallel_map(lambda ij: eng.norm(re[ij[1]] + 1j * eps[ij[0]]), pts, workers)
    table = np.array(vals, float).reshape(eps.size, n_re)
    dev = np.nan
    if verify:
        sel = np.linspace(0, len(pts) - 1, verify).round().astype(int)
        dev = 0.0
        for k in sel:
            i, j = pts[k]
            ref = weighted_resolvent_norm(op, re[j] + 1j * eps[i], delta, weight, space)
            dev = max(dev, abs(ref - table[i, j]) / ref)
    return LapScan((a, b), float(delta), eps, re, table, mean_level_spacing(op, (a, b)), dev)


def _fmt(z):
    z = complex(z)
    if abs(z.imag) <= 1e-12 * max(1.0, abs(z)):
        z = complex(z.real, 0.0)
    return "%.12g" % z.real if z.imag == 0 else "%.12g%+.12gi" % (z.real, z.imag)


def conjugate_weight_ratio(L, A, z, delta, gram=None):
    """``|<A>^{-d}(L-z)^{-1}<A>^{-d}|`` and the same with a reference weight.

    Returns only the conjugate-operator weighted norm; callers compare it to
    :func:`weighted_resolvent_norm` themselves.
    """
    n = L.shape[0]
    R = np.linalg.inv(L - complex(z) * np.eye(n))
    Wa = scipy.linalg.fractional_matrix_power(
        hermitian_part(A @ A) + np.eye(n), -0.5 * delta) if delta else np.eye(n)
    Wa = hermitian_part(Wa)
    G = np.eye(n) if gram is None else gram
    return weighted_norm(Wa @ R @ Wa, hermitian_part(G))


# ---------------------------------------------------------------- pencil

@dataclass(frozen=True, eq=False)
class PencilLap:
    pencil_scan: np.ndarray
    energy_scan: np.ndarray
    re_grid: np.ndarray
    pencil_sup: float
    energy_sup: float

    @property
    def ratio(self):
        return self.pencil_sup / self.energy_sup


def pencil_weighted_norm(pair, z, delta, weight=None):
    """``|<h>^{1/2} <x>^{-d} p(z)^{-1} <x>^{-d}|`` on the base space."""
    if not in_rho(pair, z):
        raise ResolventSetError("z = %r is not in the resolvent set" % complex(z))
    w = weight_vector(weight, pair.n, delta)
    P = pencil_eval(pair, z)
    X = np.linalg.solve(P, np.diag(w)) * 1.0
    X = w[:, None] * X
    half = pair.scale.power(0.5)
    return spectral_norm(half @ X)


def pencil_lap(pair, interval, delta, eps, weight=None, n_re=31, workers=1):
    """Compare the pencil-side and energy-side sups on ``Re z in I``, ``Im z = eps``."""
    a, b = float(interval[0]), float(interval[1])
    if a <= 0 <= b:
        raise PreconditionError("the interval [%g, %g] contains 0" % (a, b))
    from .operators import build_H
    H = build_H(pair)
    re = np.linspace(a, b, n_re)
    zs = list(re + 1j * eps)
    ps = np.array(_parallel_map(lambda z: pencil_weighted_norm(pair, z, delta, weight), zs, workers))
    eng = _OracleResolvent(H, delta, weight)
    es = np.array(_parallel_map(eng.norm, zs, workers))
    return PencilLap(ps, es, re, float(ps.max()), float(es.max()))


# ---------------------------------------------------------------- Mourre

@dataclass(frozen=True, eq=False)
class MourreReport:
    interval: tuple
    c1: float
    form_eigenvalues: np.ndarray
    negative_rank: int
    range_dim: int
    min_ratio: float
    negative_rank_refined: Optional[int] = None
    form_eigenvalues_refined: Optional[np.ndarray] = None
    hermitian_defect: float = 0.0

    def passed(self, require_positive=False):
        if self.range_dim == 0:
            return True
        ok = self.negative_rank <= RANK_BUDGET
        if self.negative_rank_refined is not None:
            ok = ok and self.negative_rank_refined == self.negative_rank
        if require_positive:
            ok = ok and self.negative_rank == 0 and self.min_ratio >= 0.5 * self.c1
        return bool(ok)


def mourre_c1_prediction(interval, mass):
    """``min_{l in I} (l^2 - m^2) / l``: the symbol of ``[b, i a]`` for free ``b``."""
    a, b = interval
    lam = np.linspace(a, b, 1001)
    return float(np.min((lam ** 2 - mass ** 2) / lam))


def _on_real_spectrum(f, rtol=1e-8):
    """Window evaluated on real eigenvalues; non-real eigenvalues are sent to 0."""
    def g(lam):
        lam = np.asarray(lam, dtype=complex)
        real = np.abs(lam.imag) <= rtol * max(1.0, float(np.abs(lam).max(initial=0)))
        return np.where(real, f(lam.real), 0.0)
    return g


def _re_form(G, X):
    return 0.5 * (G @ X + X.conj().T @ G)


def mourre_form(L, A, f, c1, gram=None):
    """Compressed ``Re(f(L)[L, iA]f(L)) - c1 f(L)^2`` on ``Ran f(L)``.

    ``Re`` is taken with respect to the Krein form ``gram`` (identity by
    default).  Returns ``(eigenvalues, range_dim, min_ratio, defect)`` where
    ``min_ratio`` is the smallest generalized eigenvalue of the form against
    the compressed ``f(L)^2`` (NaN when that is not positive definite).
    """
    n = L.shape[0]
    G = np.eye(n) if gram is None else np.asarray(gram)
    fL = eigen_oracle_calculus(L, _on_real_spectrum(f)).matrix
    C = L @ (1j * A) - (1j * A) @ L
    F = _re_form(G, fL @ C @ fL)
    W = _re_form(G, fL @ fL)
    Q = orth_range(fL)
    if Q.shape[1] == 0:
        return np.zeros(0), 0, np.inf, 0.0
    Fc = Q.conj().T @ F @ Q
    Wc = Q.conj().T @ W @ Q
    defect = float(np.linalg.norm(Fc - Fc.conj().T, 2) / max(np.linalg.norm(Fc, 2), 1e-300))
    Fc, Wc = hermitian_part(Fc), hermitian_part(Wc)
    ev = np.linalg.eigvalsh(Fc - c1 * Wc)
    try:
        ratio = float(scipy.linalg.eigh(Fc, Wc, eigvals_only=True).min())
    except np.linalg.LinAlgError:
        ratio = np.nan
    return ev, Q.shape[1], ratio, defect


def mourre_check(L, A, f, c1, gram=None, refined=None, thresholds=(), window=None):
    """Mourre shadow on ``Ran f(L)``, optionally at a refined resolution.

    ``refined`` is a tuple ``(L2, A2, gram2)``.  ``window`` is the support of
    ``f``; it must avoid ``+-thresholds`` and 0.
    """
    if window is None:
        window = getattr(f, "support", (-np.inf, np.inf))
    a, b = window
    for t in list(thresholds) + [0.0]:
        for s in (t, -t):
            if a <= s <= b:
                raise PreconditionError("window [%g, %g] touches the threshold %g" % (a, b, s))
    ev, dim, ratio, defect = mourre_form(L, A, f, c1, gram)
    tol = FORM_RTOL * max(1.0, float(np.abs(ev).max(initial=0)))
    neg = int(np.sum(ev < -tol))
    neg2, ev2 = None, None
    if refined is not None:
        ev2, _, _, _ = mourre_form(refined[0], refined[1], f, c1, refined[2])
        tol2 = FORM_RTOL * max(1.0, float(np.abs(ev2).max(initial=0)))
        neg2 = int(np.sum(ev2 < -tol2))
    return MourreReport((a, b), float(c1), ev, neg, dim, ratio, neg2, ev2, defect)


# ---------------------------------------------------------------- propagation

@dataclass(frozen=True)
class PropagationReport:
    time_value: float
    plancherel_value: float
    norm_f2: float
    horizon: float
    eps: float
    tail_estimate: float

    @property
    def constant(self):
        return self.time_value / self.norm_f2 if self.norm_f2 > 0 else 0.0

    @property
    def mismatch(self):
        m = max(abs(self.time_value), abs(self.plancherel_value))
        return abs(self.time_value - self.plancherel_value) / m if m > 0 else 0.0


def _modes(op, chi, delta, f, weight):
    """Eigen-expansion of ``W chi(op) W f`` and the Gram of ``W V_j`` in the Hilbert norm."""
    M, sp, _ = _unpack(op)
    n = M.shape[0]
    w = weight_vector(weight, n, delta)
    lam, V = np.linalg.eig(M)
    c = np.linalg.solve(V, w * f)
    c = c * _on_real_spectrum(chi)(lam)
    keep = np.abs(c) > 0
    lam, c, WV = lam[keep].real, c[keep], w[:, None] * V[:, keep]
    Gm = WV.conj().T @ sp.hilbert_gram @ WV
    return lam, c, Gm, sp.norm(f) ** 2


def _gauss_composite(a, b, h, order=8):
    t, wt = np.polynomial.legendre.leggauss(order)
    k = max(1, int(np.ceil((b - a) / h)))
    e = np.linspace(a, b, k + 1)
    mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * np.diff(e)
    return (mid[:, None] + half[:, None] * t).ravel(), (half[:, None] * wt).ravel()


def propagation_integral(op, chi, delta, f, eps, T=None, weight=None, workers=1):
    """Both sides of the damped Plancherel identity.

    time side     ``int e^{-2 eps |t|} |W e^{-itH} chi(H) W f|^2 dt`` over
                  ``[-T, T]`` by composite Gauss rules;
    frequency side ``(1/2 pi) int |W (R(l+i eps) - R(l-i eps)) chi(H) W f|^2 dl``.

    A :class:`HorizonError` is raised when the tail bound beyond ``T``
    exceeds 10% of the accumulated value.
    """
    f = np.asarray(f, dtype=complex)
    lam, c, Gm, nf2 = _modes(op, chi, delta, f, weight)
    if lam.size == 0:
        return PropagationReport(0.0, 0.0, nf2, 0.0, eps, 0.0)
    B = float(np.real(np.sum(np.abs(c)[:, None] * np.abs(c)[None, :] * np.abs(Gm))))
    if T is None:
        T = np.log(1e7) / (2 * eps)
    spread = max(float(np.ptp(lam)), eps)
    ts, wts = _gauss_composite(0.0, T, min(1.0 / spread, 1.0 / eps) * 0.5)

    def tside(t):
        ph = c * np.exp(-1j * t * lam)
        return float(np.real(np.vdot(ph, Gm @ ph)))

    vals = np.array(_parallel_map(tside, list(ts), workers))
    vals_neg = np.array(_parallel_map(tside, list(-ts), workers))
    damp = np.exp(-2 * eps * ts)
    tval = float(np.sum(wts * damp * (vals + vals_neg)))
    tail = 2 * B * np.exp(-2 * eps * T) / (2 * eps)
    if tail > HORIZON_TAIL_FRACTION * max(tval, 1e-300):
        raise HorizonError("time integral not converged at T=%g (tail bound %.3e vs value %.3e)"
                           % (T, tail, tval))
    pval = _plancherel_side(lam, c, Gm, eps, workers)
    return PropagationReport(tval, pval, nf2, float(T), float(eps), float(tail))


def _plancherel_side(lam, c, Gm, eps, workers=1):
    lo, hi = float(lam.min()), float(lam.max())
    span = 2000 * eps + (hi - lo)
    # graded panels around each mode, coarse elsewhere
    br = {lo - span, hi + span}
    for l in lam:
        d = eps / 4
        while d < span:
            br.update((l - d, l + d))
            d *= 2
    br = np.array(sorted(br))
    br = br[(br >= lo - span) & (br <= hi + span)]
    t, wt = np.polynomial.legendre.leggauss(10)
    mid, half = 0.5 * (br[1:] + br[:-1]), 0.5 * np.diff(br)
    xs = (mid[:, None] + half[:, None] * t).ravel()
    ws = (half[:, None] * wt).ravel()

    def integrand(x):
        d = c * (1.0 / (lam - x - 1j * eps) - 1.0 / (lam - x + 1j * eps))
        return float(np.real(np.vdot(d, Gm @ d)))

    vals = np.array(_parallel_map(integrand, list(xs), workers))
    total = float(np.sum(ws * vals))
    # tails beyond the grid: |d_j| ~ 2 eps / x^2
    cc = float(np.real(np.vdot(c, Gm @ c)))
    total += 2 * (2 * eps) ** 2 * cc / (3 * span ** 3)
    return total / (2 * np.pi)


def propagation_bound_constant(op, chi, delta, eps, interval, weight=None, n_re=61):
    """Documented constant ``K`` with ``C <= S^2 K + tail``.

    On ``I`` (which must contain the support of ``chi``),
    ``|W (R+ - R-) chi W f| <= 2 S kappa |f|`` with ``S`` the LAP sup at
    ``eps`` and ``kappa = |W^{-1} chi(H) W|``, so the in-window part of the
    frequency integral is at most ``(1/2 pi) |I| (2 S kappa)^2``.  Returns
    ``(K, S, kappa)`` with ``K = 2 |I| kappa^2 / pi``.
    """
    M, sp, _ = _unpack(op)
    w = weight_vector(weight, M.shape[0], delta)
    X = eigen_oracle_calculus(M, _on_real_spectrum(chi)).matrix
    kappa = weighted_norm((1 / w)[:, None] * X * w[None, :], sp.hilbert_gram)
    eng = _OracleResolvent(op, delta, weight)
    re = np.linspace(interval[0], interval[1], n_re)
    S = max(max(eng.norm(x + 1j * eps), eng.norm(x - 1j * eps)) for x in re)
    length = interval[1] - interval[0]
    return 2 * length * kappa ** 2 / np.pi, S, kappa


def plancherel_outside(op, chi, delta, f, eps, interval, weight=None):
    """Frequency-side contribution from ``l`` outside ``interval`` (per ``|f|^2``)."""
    lam, c, Gm, nf2 = _modes(op, chi, delta, np.asarray(f, complex), weight)
    if lam.size == 0:
        return 0.0
    a, b = interval
    t, wt = np.polynomial.legendre.leggauss(10)
    total = 0.0
    span = 2000 * eps + float(np.ptp(lam))
    for lo, hi in ((a - span, a), (b, b + span)):
        br = np.unique(np.concatenate([np.linspace(lo, hi, 4001)]))
        mid, half = 0.5 * (br[1:] + br[:-1]), 0.5 * np.diff(br)
        xs = (mid[:, None] + half[:, None] * t).ravel()
        ws = (half[:, None] * wt).ravel()
        for x, wx in zip(xs, ws):
            d = c * (1.0 / (lam - x - 1j * eps) - 1.0 / (lam - x + 1j * eps))
            total += wx * float(np.real(np.vdot(d, Gm @ d)))
    cc = float(np.real(np.vdot(c, Gm @ c)))
    total += 2 * (2 * eps) ** 2 * cc / (3 * span ** 3)
    return total / (2 * np.pi) / nf2


# ---------------------------------------------------------------- blow-up

@dataclass(frozen=True)
class BlowupFit:
    target: complex
    direction: complex
    distances: np.ndarray
    norms: np.ndarray
    slope: float
    residual: float

    @property
    def exponent(self):
        """``-slope``: the growth order ``alpha`` in ``|R(z)| ~ dist^{-alpha}``."""
        return -self.slope


def blowup_fit(op, target, direction=1j, sample_range=(1e-4, 1e-1), n_samples=12):
    """Log-log fit of ``|(op - z)^{-1}|`` along ``z = target + r direction``.

    ``target = inf`` samples ``z = r direction`` with ``r`` in
    ``sample_range`` and fits against ``log r``.
    """
    M, sp, _ = _unpack(op)
    direction = complex(direction) / abs(complex(direction))
    rs = np.geomspace(sample_range[0], sample_range[1], n_samples)
    inf = target is None or (np.isinf(abs(complex(target))) if np.isscalar(target) else False)
    ds, ns = [], []
    for r in rs:
        z = r * direction if inf else complex(target) + r * direction
        try:
            R = _resolvent(KreinOperator(M, sp), z)
        except ResolventSetError:
            continue
        val = sp.operator_norm(R)
        if np.isfinite(val) and val > 0:
            ds.append(r)
            ns.append(val)
    if len(ds) < MIN_FIT_SAMPLES:
        raise SamplingError("only %d valid samples (need %d)" % (len(ds), MIN_FIT_SAMPLES))
    x, y = np.log(ds), np.log(ns)
    coef, res = np.polyfit(x, y, 1, full=True)[:2]
    resid = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return BlowupFit(complex(np.inf) if inf else complex(target), direction, np.array(ds),
                     np.array(ns), float(coef[0]), resid)


def mourre_setup(grid, potential, chi, eta_radius=None, split_radius=None, flat=True, d=3):
    """``(L, A, gram)`` for the Mourre shadow of one model at one resolution.

    ``k`` is split at ``split_radius`` (no split when ``None``: ``k1 = 0``),
    ``L`` is the approximate diagonalization of ``H`` and
    ``A = diag(a_chi, a_chi)`` with ``a_chi = chi(b^2) a chi(b^2)``.
    """
    from .models import (build_a_chi, build_dilation_generator, build_flat_model,
                         build_radial_model, split_k)
    from .operators import build_diagonalization
    pair = build_flat_model(grid, potential) if flat else build_radial_model(d, grid, potential)
    if split_radius is None:
        k1 = np.zeros((pair.n, pair.n))
    else:
        k1, _ = split_k(pair, split_radius)
    D = build_diagonalization(pair, k1)
    conj = build_a_chi(build_dilation_generator(grid, eta_radius), D, chi)
    return D.L, conj.A_diag, D.gram


def mourre_experiment(grid, potential, chi, f, c1, eta_radius=None, split_radius=None,
                      thresholds=None):
    """Run :func:`mourre_check` at ``grid`` and at ``2n`` nodes on the same box."""
    from .models import Grid1D
    L, A, G = mourre_setup(grid, potential, chi, eta_radius, split_radius)
    fine = Grid1D(2 * grid.n, grid.R, grid.kind)
    ref = mourre_setup(fine, potential, chi, eta_radius, split_radius)
    if thresholds is None:
        thresholds = (potential.asymptotic_mass,)
    return mourre_check(L, A, f, c1, G, ref, thresholds)
