"""Discretized Klein-Gordon models on a line or a half-line.

The flat model lives on ``[-R, R]`` with Dirichlet conditions; the radial
model is the ``s^{(d-1)/2}``-conjugated radial part of the Laplacian on
``[s_min, R]`` with ``s_min`` equal to the grid spacing.  Both use
second-order central differences, so ``h`` is a real symmetric tridiagonal
matrix plus a diagonal potential.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import InputError, PreconditionError, StructuralError
from .linalg import eigh_function, hermitian_part
from .operators import KGPair

MIN_POINTS = 16
HARDY_TOL = 1e-8


@dataclass(frozen=True)
class Grid1D:
    """Interior nodes of a uniform Dirichlet grid.

    ``kind='flat'``: ``n`` nodes strictly inside ``[-R, R]``.
    ``kind='radial'``: ``n`` nodes strictly inside ``[s_min, R]`` with
    ``s_min = spacing``, so ``spacing = R / (n + 2)``.
    """

    n: int
    R: float
    kind: str = "flat"

    def __post_init__(self):
        if self.n < MIN_POINTS:
            raise InputError("grid needs n >= %d points (got %d)" % (MIN_POINTS, self.n))
        if not self.R > 0:
            raise InputError("R must be positive")
        if self.kind not in ("flat", "radial"):
            raise InputError("grid kind must be 'flat' or 'radial'")

    @property
    def spacing(self):
        if self.kind == "flat":
            return 2 * self.R / (self.n + 1)
        return self.R / (self.n + 2)

    @property
    def s_min(self):
        return -self.R if self.kind == "flat" else self.spacing

    @property
    def points(self):
        return self.s_min + self.spacing * np.arange(1, self.n + 1)

    @property
    def radius(self):
        """``|s|`` at the nodes (the radial variable in both geometries)."""
        return np.abs(self.points)

    def refined(self):
        """Grid with ``n`` and ``R`` both doubled."""
        return Grid1D(2 * self.n, 2 * self.R, self.kind)


def smoothstep(t):
    """C^2 quintic ramp: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t ** 3 * (10 - 15 * t + 6 * t * t)


def smoothstep_derivative(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    return np.where(inside, 30 * t * t * (1 - t) ** 2, 0.0)


@dataclass(frozen=True)
class Window:
    """C^2 plateau window with knots ``a < a + ramp <= b - ramp < b``.

    Equal to 1 on ``[a + ramp, b - ramp]`` and 0 outside ``(a, b)``.
    ``a = -inf`` or ``b = inf`` give one-sided steps.
    """

    a: float
    b: float
    ramp: float

    def __post_init__(self):
        if not self.ramp > 0:
            raise InputError("window ramp must be positive")
        if np.isfinite(self.a) and np.isfinite(self.b) and self.b - self.a < 2 * self.ramp:
            raise InputError("window [%g, %g] too short for ramp %g" % (self.a, self.b, self.ramp))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        up = smoothstep((x - self.a) / self.ramp) if np.isfinite(self.a) else 1.0
        down = smoothstep((self.b - x) / self.ramp) if np.isfinite(self.b) else 1.0
        return up * down * np.ones_like(x)

    @property
    def support(self):
        return (self.a, self.b)

    @property
    def knots(self):
        return (self.a, self.a + self.ramp, self.b - self.ramp, self.b)


POTENTIAL_KINDS = ("gaussian", "power", "step", "table")


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Electric potential ``v = v_l + v_s`` and mass data.

    kinds:
      gaussian  ``v = v0 exp(-(s/width)^2)`` (short range);
      power     ``v = v0 <s>^{-mu0}`` (long range);
      step      ``v = v0`` for ``|s| <= R0`` and 0 beyond (short range);
      table     ``v`` linearly interpolated from ``table = (s, v)``
                (short range, zero outside the table).

    For the power kind the part beyond ``R0`` is the long-range component
    ``v_l``; everything else is short range.
    """

    kind: str = "gaussian"
    v0: float = 0.0
    mu0: float = 1.0
    width: float = 1.0
    R0: float = 1.0
    delta: float = 0.9
    m: float = 1.0
    m_inf: Optional[float] = None
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise InputError("unknown potential kind %r (expected one of %s)"
                             % (self.kind, ", ".join(POTENTIAL_KINDS)))
        if self.m < 0 or (self.m_inf is not None and self.m_inf < 0):
            raise InputError("masses must be non-negative")
        if self.mu0 <= 0:
            raise InputError("decay exponent mu0 must be positive")
        if self.kind == "table" and self.table is None:
            raise InputError("table potential needs (s, v) samples")

    @property
    def asymptotic_mass(self):
        return self.m if self.m_inf is None else self.m_inf

    def sample(self, s):
        """Return ``(v_l, v_s)`` at the points ``s``."""
        s = np.asarray(s, dtype=float)
        r = np.abs(s)
        zero = np.zeros_like(s)
        if self.kind == "gaussian":
            return zero, self.v0 * np.exp(-(s / self.width) ** 2)
        if self.kind == "step":
            return zero, np.where(r <= self.R0, self.v0, 0.0)
        if self.kind == "table":
            ts, tv = (np.asarray(x, dtype=float) for x in self.table)
            return zero, np.interp(s, ts, tv, left=0.0, right=0.0)
        v = self.v0 * (r * r + 1) ** (-0.5 * self.mu0)
        tail = r >= self.R0
        return np.where(tail, v, 0.0), np.where(tail, 0.0, v)

    def long_range_bound(self, s):
        """Largest ``C`` with ``|v_l(s)| <= C <s>^{-mu0}`` on the samples."""
        v_l, _ = self.sample(s)
        w = (np.asarray(s, float) ** 2 + 1) ** (0.5 * self.mu0)
        return float(np.max(np.abs(v_l) * w, initial=0.0))

    def massless_bound_ok(self, s, d):
        """``|v_l(s)| <= delta (d-2)/2 <s>^{-1}`` for ``s >= R0`` with ``delta < 1``."""
        if not self.delta < 1:
            return False
        s = np.asarray(s, float)
        v_l, _ = self.sample(s)
        tail = np.abs(s) >= self.R0
        bound = self.delta * (d - 2) / 2 / np.sqrt(s * s + 1)
        return bool(np.all(np.abs(v_l[tail]) <= bound[tail] * (1 + 1e-12)))


def default_box_radius(potential, fallback=10.0):
    """Box radius at which the long-range part has decayed to 1e-3 of its peak.

    Solves ``<R>^{-mu0} = 1e-3``; potentials without a long-range part get
    ``fallback``.
    """
    if potential.kind != "power" or potential.v0 == 0:
        return fallback
    return float(np.sqrt(1e-3 ** (-2.0 / potential.mu0) - 1.0))


@dataclass(frozen=True, eq=False)
class ModelInfo:
    grid: Grid1D
    potential: PotentialSpec
    d: Optional[int]
    v_l: np.ndarray
    v_s: np.ndarray

    @property
    def v(self):
        return self.v_l + self.v_s

    @property
    def massless(self):
        return self.potential.m == 0


def dirichlet_laplacian(grid):
    """``-d^2/ds^2`` by central differences (positive definite)."""
    n, dx = grid.n, grid.spacing
    off = -np.ones(n - 1)
    return (np.diag(2 * np.ones(n)) + np.diag(off, 1) + np.diag(off, -1)) / dx ** 2


def _pair_from(grid, potential, d, p):
    s = grid.points
    v_l, v_s = potential.sample(s)
    v = v_l + v_s
    m = potential.m
    h = p + m * m * np.eye(grid.n) - np.diag(v * v)
    info = ModelInfo(grid, potential, d, v_l, v_s)
    return KGPair(h, np.diag(v), m_inf=potential.asymptotic_mass, model=info)


def build_flat_model(grid, potential):
    """``h = -Delta + m^2 - v^2``, ``k = v`` on ``[-R, R]``."""
    if grid.kind != "flat":
        raise InputError("flat model needs a flat grid")
    return _pair_from(grid, potential, None, dirichlet_laplacian(grid))


def radial_operator(grid, d):
    """``-d^2/ds^2 + (d-1)(d-3)/4 s^{-2}`` on ``[s_min, R]``."""
    if d < 3:
        raise InputError("radial model needs d >= 3 (got %d)" % d)
    s = grid.points
    return dirichlet_laplacian(grid) + np.diag((d - 1) * (d - 3) / 4 / s ** 2)


def build_radial_model(d, grid, potential):
    if grid.kind != "radial":
        raise InputError("radial model needs a radial grid")
    p = radial_operator(grid, d)
    if potential.m == 0 and potential.kind == "power" and not potential.massless_bound_ok(grid.points, d):
        raise PreconditionError(
            "massless model: long-range part violates |v_l| <= delta (d-2)/2 <s>^-1 beyond R0")
    return _pair_from(grid, potential, d, p)


def hardy_margin(grid, d):
    """``min eig(p - ((d-2)/2)^2 s^{-2})``; non-negative when the discrete Hardy bound holds."""
    p = radial_operator(grid, d)
    c = (d - 2) ** 2 / 4
    return float(np.linalg.eigvalsh(p - np.diag(c / grid.points ** 2)).min())


def massless_admissibility(pair):
    """``min eig(h0 - v_l^2 1_{s >= R0})`` for the zero-mass radial model."""
    info = pair.model
    s = info.grid.points
    tail = (np.abs(s) >= info.potential.R0).astype(float)
    p = radial_operator(info.grid, info.d) if info.grid.kind == "radial" \
        else dirichlet_laplacian(info.grid)
    M = p + info.potential.m ** 2 * np.eye(info.grid.n) - np.diag(info.v_l ** 2 * tail)
    return float(np.linalg.eigvalsh(M).min())


def split_k(pair, R, ramp=None):
    """Split ``k = k1 + k2`` with ``k2 = v zeta`` supported near the origin.

    ``zeta`` is 1 on ``|s| <= R`` and drops to 0 over ``[R, R + ramp]``
    (default ramp ``R/2``).  ``k1`` is the remaining tail.
    """
    info = pair.model
    s = info.grid.radius
    ramp = 0.5 * R if ramp is None else ramp
    zeta = 1.0 - smoothstep((s - R) / ramp)
    v = np.real(np.diag(pair.k))
    return np.diag(v * (1 - zeta)), np.diag(v * zeta)


def build_dilation_generator(grid, eta_radius=None):
    """``a = (eta s D + D s eta) / 2`` with ``D = -i d/ds`` by central differences.

    ``eta`` is 0 for ``|s| <= eta_radius`` and 1 for ``|s| >= 2 eta_radius``
    (C^2 ramp between).  ``eta_radius=None`` means ``eta = 1``.
    """
    s = grid.points
    if eta_radius is None:
        eta = np.ones_like(s)
    else:
        if not 0 < eta_radius < grid.R:
            raise InputError("eta cutoff radius must lie inside the domain")
        eta = smoothstep((np.abs(s) - eta_radius) / eta_radius)
    n, dx = grid.n, grid.spacing
    D = (-1j / (2 * dx)) * (np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1))
    X = np.diag(eta * s)
    a = 0.5 * (X @ D + D @ X)
    return ConjugateOperator(a=hermitian_part(a), eta=eta)


@dataclass(frozen=True, eq=False)
class ConjugateOperator:
    a: np.ndarray
    eta: Optional[np.ndarray] = None
    a_chi: Optional[np.ndarray] = None
    chi_spec: Optional[Window] = None

    @property
    def A_diag(self):
        if self.a_chi is None:
            return None
        n = self.a_chi.shape[0]
        Z = np.zeros((n, n))
        return np.block([[self.a_chi, Z], [Z, self.a_chi]])


def _b_squared(source):
    if isinstance(source, KGPair):
        return source.h0
    if hasattr(source, "b"):
        return source.b @ source.b
    return np.asarray(source, dtype=complex)


def build_a_chi(conj, source, chi, massless=None):
    """``a_chi = chi(b^2) a chi(b^2)``.

    ``source`` is a :class:`KGPair` (``b^2 = h0``), a diagonalization
    (``b^2`` from its ``b``) or ``b^2`` itself.  In the massless case the
    support of ``chi`` must stay away from 0.
    """
    b2 = _b_squared(source)
    if massless is None:
        massless = isinstance(source, KGPair) and source.m_inf == 0
    if massless:
        lo, _ = chi.support if isinstance(chi, Window) else (None, None)
        if lo is None or not lo > 0:
            raise PreconditionError("massless model: the support of chi must avoid 0")
    C = eigh_function(b2, chi)
    a_chi = hermitian_part(C @ conj.a @ C)
    return ConjugateOperator(conj.a, conj.eta, a_chi, chi if isinstance(chi, Window) else None)


@dataclass(frozen=True)
class ReferenceWeight:
    """``<x> = (s^2 + 1)^{1/2}`` on the nodes."""

    grid: Grid1D

    @property
    def values(self):
        return np.sqrt(self.grid.points ** 2 + 1)

    def power(self, delta):
        return np.diag(self.values ** delta)

    def diag(self, delta):
        """``diag(<x>^delta, <x>^delta)`` on Cauchy data."""
        w = self.values ** delta
        return np.diag(np.concatenate([w, w]))


def check_equivalence(h, eps2):
    """Extreme generalized eigenvalues of ``(|h|, eps^2)``."""
    h = hermitian_part(np.asarray(h, dtype=complex))
    eps2 = hermitian_part(np.asarray(eps2, dtype=complex))
    wh = np.linalg.eigvalsh(h)
    we = np.linalg.eigvalsh(eps2)
    tol = 1e-12
    if np.abs(wh).min() <= tol * max(1.0, np.abs(wh).max()):
        raise StructuralError("h has a (near) kernel")
    if we.min() <= tol * max(1.0, we.max()):
        raise StructuralError("reference eps^2 is not positive definite")
    abs_h = eigh_function(h, np.abs)
    g = scipy.linalg.eigh(abs_h, eps2, eigvals_only=True)
    return float(g.min()), float(g.max())


def thresholds(pair):
    """Threshold set of the reference operator: ``{m_inf}``, ``{0}`` when massless."""
    m = pair.m_inf if pair.m_inf is not None else pair.mass
    return {float(m)}
