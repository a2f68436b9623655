"""Functional calculus for Krein-self-adjoint matrices.

Two independent paths are provided.  :func:`hs_calculus` integrates the
almost-analytic extension of ``phi`` against the resolvent over a strip
around the real axis; :func:`eigen_oracle_calculus` applies ``phi`` to the
eigenvalues of a diagonalization and serves as ground truth.

Smooth functions are passed as :class:`SmoothFunction` objects that know
their derivatives.  The shipped family (Gaussians, erf plateaus, rational
poles, polynomials and their products) has exact derivatives; arbitrary
callables are wrapped in :class:`SampledFunction`, which falls back to
finite differences.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb, factorial
from typing import Optional

import numpy as np
import scipy.linalg
from numpy.polynomial import hermite as _herm
from scipy.special import erf

from .errors import (AccuracyError, ConditioningError, ContourError,
                     PreconditionError)
from .krein import KreinOperator, classify_spectrum, pp_projection
from .linalg import hermitian_part, orth_range

DEFAULT_ORDER = 3
HS_TOL = 1e-7
ORACLE_MAX_COND = 1e8
GAP_RTOL = 1e-3
DEFINITE_TOL = 1e-8
GL_NODES = 6
CUTOFF_PANELS = 2


class SmoothFunction:
    """A smooth real function with derivatives ``derivs(x, kmax)``.

    ``derivs`` returns an array of shape ``(kmax + 1, len(x))`` holding
    ``phi, phi', ..., phi^(kmax)``.  ``support`` is an interval outside of
    which ``phi`` is negligible (below 1e-16 relative).
    """

    support = (-np.inf, np.inf)

    def __call__(self, x):
        x = np.asarray(x)
        return self.derivs(np.atleast_1d(x), 0)[0].reshape(x.shape)

    def derivs(self, x, kmax):
        raise NotImplementedError

    def __mul__(self, other):
        return Product(self, other)


class Gaussian(SmoothFunction):
    """``amp * exp(-((x - c)/w)^2)``; also evaluates at complex ``x``."""

    def __init__(self, center, width, amp=1.0):
        self.c, self.w, self.amp = float(center), float(width), float(amp)
        r = self.w * np.sqrt(np.log(1e16))
        self.support = (self.c - r, self.c + r)
        self.feature = self.w

    def derivs(self, x, kmax):
        u = (np.asarray(x) - self.c) / self.w
        g = self.amp * np.exp(-u * u)
        out = np.empty((kmax + 1,) + u.shape, dtype=np.result_type(u, float))
        for k in range(kmax + 1):
            coef = np.zeros(k + 1)
            coef[k] = 1.0
            out[k] = (-1.0 / self.w) ** k * _herm.hermval(u, coef) * g
        return out


class ErfPlateau(SmoothFunction):
    """``(erf((x-a)/s) - erf((x-b)/s)) / 2``: about 1 on ``[a, b]``, 0 far outside."""

    def __init__(self, a, b, s):
        self.a, self.b, self.s = float(a), float(b), float(s)
        r = self.s * 6.2
        self.support = (self.a - r, self.b + r)
        self.feature = self.s
        self._ga = Gaussian(self.a, self.s, 1.0 / (np.sqrt(np.pi) * self.s))
        self._gb = Gaussian(self.b, self.s, 1.0 / (np.sqrt(np.pi) * self.s))

    def derivs(self, x, kmax):
        x = np.asarray(x)
        out = np.empty((kmax + 1,) + x.shape, dtype=np.result_type(x, float))
        out[0] = 0.5 * (erf((x - self.a) / self.s) - erf((x - self.b) / self.s))
        if kmax:
            out[1:] = self._ga.derivs(x, kmax - 1) - self._gb.derivs(x, kmax - 1)
        return out


class Pole(SmoothFunction):
    """``1 / (x - z0)`` for non-real ``z0``."""

    def __init__(self, z0):
        self.z0 = complex(z0)
        if self.z0.imag == 0:
            raise ValueError("pole must be off the real axis")
        self.feature = abs(self.z0.imag)

    def derivs(self, x, kmax):
        d = np.asarray(x) - self.z0
        return np.array([(-1) ** k * factorial(k) / d ** (k + 1) for k in range(kmax + 1)])


class PolynomialFunction(SmoothFunction):
    def __init__(self, coef):
        self.p = np.polynomial.Polynomial(coef)

    def derivs(self, x, kmax):
        x = np.asarray(x)
        return np.array([self.p.deriv(k)(x) if k else self.p(x) for k in range(kmax + 1)])


class Exponential(SmoothFunction):
    """``exp(i t x)``."""

    def __init__(self, t):
        self.t = float(t)

    def derivs(self, x, kmax):
        e = np.exp(1j * self.t * np.asarray(x))
        return np.array([(1j * self.t) ** k * e for k in range(kmax + 1)])


class Product(SmoothFunction):
    """Leibniz rule for ``f * g``."""

    def __init__(self, f, g):
        self.f, self.g = f, g
        self.support = (max(f.support[0], g.support[0]), min(f.support[1], g.support[1]))
        fs = [getattr(u, "feature", None) for u in (f, g)]
        fs = [x for x in fs if x is not None]
        if fs:
            self.feature = min(fs)

    def derivs(self, x, kmax):
        F = self.f.derivs(x, kmax)
        G = self.g.derivs(x, kmax)
        out = np.zeros(F.shape, dtype=np.result_type(F, G))
        for k in range(kmax + 1):
            for j in range(k + 1):
                out[k] = out[k] + comb(k, j) * F[j] * G[k - j]
        return out


class SampledFunction(SmoothFunction):
    """Arbitrary callable; derivatives by central differences.

    The step is ``eps^{1/3}`` times the local scale, raised to the power
    ``1/(k+2)`` ratio appropriate for the order (crude but adequate for low
    orders).
    """

    def __init__(self, func, support=(-np.inf, np.inf), scale=1.0):
        self.func = func
        self.support = support
        self.scale = float(scale)

    def derivs(self, x, kmax):
        x = np.asarray(x, dtype=float)
        out = [np.asarray(self.func(x))]
        for k in range(1, kmax + 1):
            h = self.scale * np.finfo(float).eps ** (1.0 / (k + 2))
            acc = 0.0
            for j in range(k + 1):
                acc = acc + (-1) ** j * comb(k, j) * np.asarray(self.func(x + (k / 2 - j) * h))
            out.append(acc / h ** k)
        return np.array(out)


def as_smooth(phi, support=None):
    if isinstance(phi, SmoothFunction):
        return phi
    return SampledFunction(phi, support if support is not None else (-np.inf, np.inf))


def sup_norm_m(phi, m, grid=None):
    """``sum_{k<=m} sup|phi^(k)|`` sampled on ``grid`` (default: support, 4001 points)."""
    phi = as_smooth(phi)
    if grid is None:
        a, b = phi.support
        grid = np.linspace(a, b, 4001)
    D = phi.derivs(grid, m)
    return float(np.sum(np.max(np.abs(D), axis=1)))


def _smooth_step(t):
    """C^4 polynomial step on ``[0, 1]`` and its derivative.

    Being a polynomial between its knots, it is integrated exactly by the
    Gauss rules used on the cutoff band.
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    s = t ** 5 * (126 - 420 * t + 540 * t ** 2 - 315 * t ** 3 + 70 * t ** 4)
    ds = 630 * t ** 4 * (1 - t) ** 4
    return s, ds


def _sigma(t):
    """Transverse cutoff: 1 for ``|t| <= 1/2``, 0 for ``|t| >= 1``, C^4."""
    return 1.0 - _smooth_step(2 * np.abs(t) - 1)[0]


def _sigma_prime(t):
    return -2 * np.sign(t) * _smooth_step(2 * np.abs(t) - 1)[1]


@dataclass(frozen=True)
class AlmostAnalyticExtension:
    """``phi~(x+iy) = sum_{k<=N} phi^(k)(x) (iy)^k / k! * sigma(y / w)``."""

    phi: SmoothFunction
    order: int = DEFAULT_ORDER
    width: float = 1.0

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z.real.ravel(), z.imag.ravel()
        D = self.phi.derivs(x, self.order)
        acc = sum(D[k] * (1j * y) ** k / factorial(k) for k in range(self.order + 1))
        return (acc * _sigma(y / self.width)).reshape(z.shape)

    def dbar(self, x, y):
        """``d phi~ / d zbar`` at arrays ``x``, ``y`` of equal shape."""
        N, w = self.order, self.width
        D = self.phi.derivs(np.asarray(x, float).ravel(), N + 1)
        y = np.asarray(y, float).ravel()
        iy = 1j * y
        top = D[N + 1] * iy ** N / factorial(N) * _sigma(y / w)
        taylor = sum(D[k] * iy ** k / factorial(k) for k in range(N + 1))
        return 0.5 * (top + 1j * _sigma_prime(y / w) / w * taylor)


@dataclass(frozen=True, eq=False)
class CalculusResult:
    matrix: np.ndarray
    error_estimate: float
    method: str
    eigenvector_condition: Optional[float] = None
    levels: int = 0


def _gauss(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1), 0.5 * w


def _x_breaks(xa, xb, hx, y, centers):
    """Panel edges on ``[xa, xb]``: graded toward each point of ``centers``
    down to scale ``y``, and nowhere longer than ``hx``."""
    pts = [xa, xb]
    for c in centers:
        d = y
        while d < hx:
            pts.extend([c - d, c + d])
            d *= 2
        pts.append(c)
    pts = np.unique(np.clip(pts, xa, xb))
    keep = np.concatenate([[True], np.diff(pts) > 0.25 * y])
    pts = pts[keep]
    pts[-1] = xb
    out = [pts[0]]
    for left, right in zip(pts[:-1], pts[1:]):
        k = max(1, int(np.ceil((right - left) / hx)))
        out.extend(np.linspace(left, right, k + 1)[1:])
    return np.asarray(out)


def _hs_panels(ext, xa, xb, hx, y_min, centers, band_panels=CUTOFF_PANELS):
    """Yield node/weight arrays ``(z_j, c_j)``, one dyadic y-panel at a time.

    ``phi(A) ~ sum c_j (z_j - A)^{-1}``.  The strip ``y_min <= |y| <= w`` is
    cut into panels ``[y/2, y]``; inside each, x-panels are graded toward the
    real parts of nearby eigenvalues and both directions use Gauss-Legendre.
    """
    tg, wg = _gauss(GL_NODES)
    w = ext.width
    # the cutoff band [w/2, w] carries the sigma' term: split it evenly
    bands = [(w * (1 - 0.5 * (j + 1) / band_panels), w * (1 - 0.5 * j / band_panels))
             for j in range(band_panels)]
    top = 0.5 * w
    while top > y_min * (1 + 1e-12):
        bot = max(0.5 * top, y_min)
        bands.append((bot, top))
        top = bot
    for bot, top in bands:
        ys = bot + (top - bot) * tg
        wy = (top - bot) * wg
        edges = _x_breaks(xa, xb, hx, bot, centers)
        xs = (edges[:-1, None] + np.diff(edges)[:, None] * tg[None, :]).ravel()
        wx = (np.diff(edges)[:, None] * wg[None, :]).ravel()
        for sgn in (1.0, -1.0):
            X, Y = np.meshgrid(xs, sgn * ys, indexing="ij")
            W = (wx[:, None] * wy[None, :]).ravel()
            yield (X + 1j * Y).ravel(), (-W / np.pi) * ext.dbar(X, Y)


def _resolvent_sum(M, zs, cs, workers=1, chunk=256):
    """``sum_j c_j (z_j - M)^{-1}`` with a fixed, index-ordered reduction."""
    n = M.shape[0]
    keep = np.abs(cs) > 0
    zs, cs = zs[keep], cs[keep]
    starts = list(range(0, len(zs), chunk))
    I = np.eye(n)

    def part(s):
        z = zs[s:s + chunk]
        c = cs[s:s + chunk]
        stack = z[:, None, None] * I[None] - M[None]
        inv = np.linalg.solve(stack, np.broadcast_to(I, stack.shape))
        return np.tensordot(c, inv, axes=(0, 0))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(part, starts))
    else:
        parts = [part(s) for s in starts]
    out = np.zeros((n, n), dtype=complex)
    for p in parts:
        out += p
    return out


def _default_width(A, phi, eigs=None):
    if eigs is None:
        eigs = np.linalg.eigvals(A)
    a, b = phi.support
    nonreal = eigs[np.abs(eigs.imag) > 1e-8 * max(1.0, np.abs(eigs).max())]
    w = 1.0
    if nonreal.size:
        dx = np.maximum(0.0, np.maximum(a - nonreal.real, nonreal.real - b))
        dist = np.sqrt(dx ** 2 + nonreal.imag ** 2)
        w = min(w, 0.5 * float(dist.min()))
    return w


def hs_calculus(A, phi, order=DEFAULT_ORDER, width=None, tol=HS_TOL, max_level=4,
                y_min=None, support=None, workers=1):
    """``phi(A) = -(1/pi) int dphi~/dzbar (z - A)^{-1} dx dy``.

    Each refinement level halves the x-panel length and ``y_min``; the
    loop stops when two successive values differ by less than ``tol`` in
    spectral norm and that difference is the reported error.  The extension
    vanishes for ``|Im z| >= width``, so non-real eigenvalues further than
    ``width`` from the support are sent to 0; the default width is half
    their distance to the support (at most the feature scale of ``phi``).
    """
    M = A.matrix if isinstance(A, KreinOperator) else np.asarray(A, dtype=complex)
    phi = as_smooth(phi, support)
    xa, xb = phi.support if support is None else support
    if not (np.isfinite(xa) and np.isfinite(xb)):
        raise PreconditionError("hs_calculus needs a function with bounded support")
    eigs = np.linalg.eigvals(M)
    feature = getattr(phi, "feature", 0.1 * (xb - xa))
    if width is None:
        width = min(_default_width(M, phi, eigs), 2 * feature)
    ext = AlmostAnalyticExtension(phi, order, width)
    if y_min is None:
        y_min = width * 2.0 ** -8
    near = eigs[(np.abs(eigs.imag) < width) & (eigs.real > xa - width) & (eigs.real < xb + width)]
    centers = np.unique(np.round(near.real, 12))
    prev, diff = None, np.inf
    history = []
    for level in range(max_level + 1):
        hx = min(feature, width) / 2 ** (level + 1)
        cur = np.zeros_like(M)
        for zs, cs in _hs_panels(ext, xa, xb, hx, y_min / 2 ** level, centers,
                                 CUTOFF_PANELS * 2 ** level):
            cur += _resolvent_sum(M, zs, cs, workers)
        if prev is not None:
            diff = float(np.linalg.norm(cur - prev, 2))
            history.append(diff)
            if diff < tol:
                return CalculusResult(cur, diff, "hs_quadrature", levels=level)
            if len(history) > 1 and history[-1] > 0.9 * history[-2]:
                break
        prev = cur
    raise AccuracyError("Helffer-Sjostrand quadrature did not reach %.1e (successive "
                        "differences %s)" % (tol, ["%.2e" % h for h in history]))


def _eig_decomp(M):
    lam, V = np.linalg.eig(M)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond >= ORACLE_MAX_COND:
        raise ConditioningError("eigenvector basis condition %.3e >= %.0e; the matrix is "
                                "(nearly) defective, use hs_calculus or a Jordan-aware path"
                                % (cond, ORACLE_MAX_COND))
    return lam, V, cond


def eigen_oracle_calculus(A, phi, decomposition=None):
    """``V phi(D) V^{-1}`` from a diagonalization (``phi`` evaluated at the eigenvalues)."""
    M = A.matrix if isinstance(A, KreinOperator) else np.asarray(A, dtype=complex)
    lam, V, cond = decomposition if decomposition is not None else _eig_decomp(M)
    fv = np.asarray(phi(lam), dtype=complex)
    out = np.linalg.solve(V.T, (V * fv).T).T
    return CalculusResult(out, 0.0, "eigen_oracle", cond)


@dataclass(frozen=True)
class NormBoundFit:
    constant: float
    m: int
    ratios: np.ndarray


def calculus_norm_fit(A, functions, m=2):
    """Smallest ``C`` with ``|phi(A)| <= C |phi|_m`` over the given functions."""
    M = A.matrix if isinstance(A, KreinOperator) else np.asarray(A, dtype=complex)
    dec = _eig_decomp(M)
    space = A.space if isinstance(A, KreinOperator) else None
    r = []
    for phi in functions:
        val = eigen_oracle_calculus(M, phi, dec).matrix
        nrm = space.operator_norm(val) if space is not None else np.linalg.norm(val, 2)
        r.append(nrm / sup_norm_m(phi, m))
    r = np.array(r)
    return NormBoundFit(float(r.max()), m, r)


# ---------------------------------------------------------------- projections

def _contour_pieces(a, b, Y, rho, g):
    """Rounded rectangle around ``[a, b]``, counter-clockwise, as parametrized pieces.

    Vertical sides cross the real axis at ``a`` and ``b``; their panels are
    graded geometrically toward the crossing down to scale ``g``.
    Returns lists of nodes ``z`` and weights ``dz``.
    """
    tg, wg = _gauss(2 * GL_NODES)
    zs, ws = [], []

    def segment(z0, z1):
        zs.append(z0 + (z1 - z0) * tg)
        ws.append((z1 - z0) * wg)

    def arc(c, r, t0, t1):
        th = t0 + (t1 - t0) * tg
        zs.append(c + r * np.exp(1j * th))
        ws.append(1j * r * np.exp(1j * th) * (t1 - t0) * wg)

    h = Y - rho
    # graded breakpoints 0 < g < 2g < ... < h along each vertical side
    br = [0.0]
    t = g
    while t < h:
        br.append(t)
        t *= 2
    br.append(h)
    br = np.array(br)
    for s in (1, -1):
        for y0, y1 in zip(br[:-1], br[1:]):
            # right side goes up for s=1 (from b) and down for s=-1 (to b)
            if s == 1:
                segment(b + 1j * y0, b + 1j * y1)
            else:
                segment(b - 1j * y1, b - 1j * y0)
    arc(b - rho + 1j * h, rho, 0.0, np.pi / 2)
    nx = max(2, int(np.ceil((b - a - 2 * rho) / max(rho, 1e-300))))
    xe = np.linspace(b - rho, a + rho, nx + 1)
    for x0, x1 in zip(xe[:-1], xe[1:]):
        segment(x0 + 1j * Y, x1 + 1j * Y)
    arc(a + rho + 1j * h, rho, np.pi / 2, np.pi)
    for y0, y1 in zip(br[::-1][:-1], br[::-1][1:]):
        segment(a + 1j * y0, a + 1j * y1)
    for y0, y1 in zip(br[:-1], br[1:]):
        segment(a - 1j * y0, a - 1j * y1)
    arc(a + rho - 1j * h, rho, np.pi, 1.5 * np.pi)
    for x0, x1 in zip(xe[::-1][:-1], xe[::-1][1:]):
        segment(x0 - 1j * Y, x1 - 1j * Y)
    arc(b - rho - 1j * h, rho, 1.5 * np.pi, 2 * np.pi)
    return np.concatenate(zs), np.concatenate(ws)


def spectral_projection(A, interval, height=None, workers=1):
    """Projection onto the real spectrum in ``interval`` and its definiteness.

    ``E = (1/2 pi i) \\oint (z - A)^{-1} dz`` around a rounded rectangle
    crossing the axis at the endpoints.  The definiteness is the sign
    pattern of the Krein Gram compressed to ``Ran E`` (in a basis that is
    orthonormal for ``hilbert_gram``): ``'positive'``, ``'negative'`` or
    ``'indefinite'`` (``'empty'`` for a zero projection).
    """
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError("interval must satisfy a < b")
    M = A.matrix
    eigs = np.linalg.eigvals(M)
    diam = float(np.ptp(eigs.real)) + float(np.ptp(eigs.imag))
    gap_tol = GAP_RTOL * max(diam, 1e-300)
    real_like = np.abs(eigs.imag) <= gap_tol
    for e in (a, b):
        d = np.abs(eigs - e)
        if d.min() <= gap_tol:
            raise ContourError("interval endpoint %g lies within %.3e of the eigenvalue %r"
                               % (e, gap_tol, complex(eigs[np.argmin(d)])))
    if height is None:
        height = 0.5 * (b - a)
        near = (~real_like) & (eigs.real > a - height) & (eigs.real < b + height)
        if near.any():
            height = min(height, 0.5 * float(np.abs(eigs[near].imag).min()))
    if height <= gap_tol:
        raise ContourError("non-real eigenvalues too close to the interval to separate")
    g = max(0.25 * min(np.abs(eigs - a).min(), np.abs(eigs - b).min()), 1e-12)
    rho = 0.25 * min(height, 0.5 * (b - a))
    zs, ws = _contour_pieces(a, b, height, rho, min(g, 0.5 * (height - rho)))
    E = _resolvent_sum(M, zs, ws / (2j * np.pi), workers)
    return E, projection_definiteness(A, E)


def projection_definiteness(A, E, tol=DEFINITE_TOL):
    sp = A.space
    R = scipy.linalg.cholesky(hermitian_part(sp.hilbert_gram), lower=False)
    Q = orth_range(R @ E @ np.linalg.inv(R))
    if Q.shape[1] == 0:
        return "empty"
    B = np.linalg.solve(R, Q)
    g = np.linalg.eigvalsh(hermitian_part(B.conj().T @ sp.gram @ B))
    if g.min() > tol:
        return "positive"
    if g.max() < -tol:
        return "negative"
    return "indefinite"


# ---------------------------------------------------------------- dynamics

def evolve(A, t, f, method="oracle"):
    """``e^{itA} f``.

    ``oracle``: matrix exponential.  ``split``: the non-real point spectrum
    part is evolved exactly through the compression of ``A`` to
    ``Ran 1_pp``; the complement through the eigen-oracle calculus of
    ``exp(itx)`` on the real eigenvalues, which needs them non-defective.
    """
    f = np.asarray(f, dtype=complex)
    M = A.matrix
    if t == 0:
        return f.copy()
    if method == "oracle":
        return scipy.linalg.expm(1j * t * M) @ f
    if method != "split":
        raise ValueError("method must be 'oracle' or 'split'")
    return _split_propagator(A, t) @ f


def _split_parts(A):
    M = A.matrix
    cls = classify_spectrum(A)
    bad = [r.value for r in cls.real_eigs if r.riesz_index > 1]
    if bad:
        raise PreconditionError("split dynamics unsupported: defective real eigenvalues %s" % bad)
    P = pp_projection(A) if cls.complex_pairs else np.zeros_like(M)
    lam, V, cond = _eig_decomp(M)
    tol = 1e-6 * max(1.0, np.abs(lam).max())
    realmask = np.abs(lam.imag) <= tol
    return P, lam, V, realmask


def _split_propagator(A, t, parts=None):
    P, lam, V, realmask = parts if parts is not None else _split_parts(A)
    M = A.matrix
    out = np.linalg.solve(V.T, (V * np.where(realmask, np.exp(1j * t * lam.real), 0)).T).T
    if np.abs(P).max() > 0:
        Q = orth_range(P)
        Ap = np.linalg.lstsq(Q, M @ Q, rcond=None)[0]
        out = out + Q @ scipy.linalg.expm(1j * t * Ap) @ np.linalg.lstsq(Q, P, rcond=None)[0]
    return out


@dataclass(frozen=True)
class GrowthFit:
    times: np.ndarray
    norms: np.ndarray
    exp_rate: float
    poly_exponent: float
    residual: float


def growth_fit(A, times, projector=None, f=None, fit_from=0.5):
    """Fit ``|e^{itA} P|`` (or ``|e^{itA} P f|``) by ``e^{rate t}`` and ``<t>^n``.

    Norms are taken in the space's Hilbert norm.  Both fits use the
    samples with ``t >= fit_from * max(t)``.
    """
    M = A.matrix
    n = M.shape[0]
    P = np.eye(n) if projector is None else projector
    R = scipy.linalg.cholesky(hermitian_part(A.space.hilbert_gram), lower=False)
    Ri = np.linalg.inv(R)
    lam, V = np.linalg.eig(M)
    Vi = np.linalg.inv(V)
    times = np.asarray(times, float)
    norms = []
    for t in times:
        U = (V * np.exp(1j * t * lam)) @ Vi @ P
        if f is None:
            norms.append(np.linalg.norm(R @ U @ Ri, 2))
        else:
            norms.append(np.linalg.norm(R @ (U @ f)))
    norms = np.array(norms)
    sel = times >= fit_from * times.max()
    lt = np.log(np.maximum(norms[sel], 1e-300))
    c1, res1 = np.polyfit(times[sel], lt, 1, full=True)[:2]
    c2 = np.polyfit(np.log(np.sqrt(1 + times[sel] ** 2)), lt, 1)
    residual = float(np.sqrt(res1[0] / sel.sum())) if len(res1) else 0.0
    return GrowthFit(times, norms, float(c1[0]), float(c2[0]), residual)
