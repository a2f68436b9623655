"""Klein-Gordon generators built from a pair ``(h, k)``.

For Hermitian ``h`` and ``k`` acting on ``C^n`` the energy generator is
``H = [[0, I], [h, 2k]]`` on Cauchy data ``(f0, f1)`` and the charge generator
is ``K = [[k, I], [h0, k]]`` with ``h0 = h + k^2``.  Both are invertible
exactly where the quadratic pencil ``p(z) = h + z(2k - z)`` is, and they are
intertwined by ``Phi = [[I, 0], [k, I]]``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ResolventSetError, SplittingError, StructuralError
from .krein import KreinOperator, KreinSpace, OperatorScale, operator_power
from .linalg import hermitian_part, is_hermitian, spectral_norm, weighted_norm

RHO_GUARD = 1e-8
PSD_CLIP = 1e-10
PINV_RTOL = 1e-10
KERNEL_TOL = 1e-12


def _herm(A, name):
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.shape[0] != A.shape[1]:
        raise ValueError("%s must be square" % name)
    if not is_hermitian(A, 1e-10):
        raise ValueError("%s must be Hermitian" % name)
    return hermitian_part(A)


@dataclass(frozen=True, eq=False)
class KGPair:
    """Scalar data of a Klein-Gordon equation.

    ``m_inf`` is the asymptotic mass; it is not derivable from the matrices
    and is set by the model builders.
    """

    h: np.ndarray
    k: np.ndarray
    m_inf: Optional[float] = None
    model: object = None

    def __post_init__(self):
        h = _herm(self.h, "h")
        k = _herm(self.k, "k")
        if h.shape != k.shape:
            raise ValueError("h and k must have the same shape")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "h0", h + k @ k)
        object.__setattr__(self, "scale", OperatorScale(h))

    @property
    def n(self):
        return self.h.shape[0]

    @property
    def mass(self):
        """``sqrt(min(sigma(h) on R+))``; 0 if ``h`` has no positive eigenvalue."""
        w = self.scale.eigenvalues
        pos = w[w > KERNEL_TOL * max(1.0, float(np.abs(w).max()))]
        return float(np.sqrt(pos.min())) if pos.size else 0.0


@dataclass(eq=False)
class Pencil:
    """``p(z) = h + z(2k - z)`` with a per-instance evaluation cache.

    Set ``cache=False`` when evaluating from several threads.
    """

    pair: KGPair
    cache: bool = True
    _store: dict = field(default_factory=dict, repr=False)

    def __call__(self, z):
        return pencil_eval(self, z)


def pencil_eval(pencil, z):
    z = complex(z)
    if isinstance(pencil, Pencil):
        if pencil.cache and z in pencil._store:
            return pencil._store[z]
        pair = pencil.pair
    else:
        pair = pencil
    n = pair.n
    P = pair.h + z * (2 * pair.k - z * np.eye(n))
    if isinstance(pencil, Pencil) and pencil.cache:
        pencil._store[z] = P
    return P


def _smallest_sv(P):
    s = np.linalg.svd(P, compute_uv=False)
    return float(s[-1]), float(s[0])


def in_rho(pencil, z, guard=RHO_GUARD):
    """Is ``p(z)`` invertible?  Smallest singular value against ``guard * |p(z)|``.

    ``p(conj z) = p(z)^*`` so the test is run on the point with ``Im z >= 0``,
    which makes the answer exactly conjugation invariant.
    """
    z = complex(z)
    if z.imag < 0:
        z = z.conjugate()
    smin, smax = _smallest_sv(pencil_eval(pencil, z))
    return smax > 0 and smin > guard * smax


def _check_rho(pair, z):
    zz = complex(z)
    zq = zz.conjugate() if zz.imag < 0 else zz
    smin, smax = _smallest_sv(pencil_eval(pair, zq))
    if not (smax > 0 and smin > RHO_GUARD * smax):
        raise ResolventSetError("z = %r is not in the resolvent set (smallest singular value "
                                "of p(z) is %.3e)" % (zz, smin), smin)


@dataclass(frozen=True, eq=False)
class EnergyOperator:
    matrix: np.ndarray
    space: KreinSpace
    homogeneous_hilbert_gram: Optional[np.ndarray]
    pair: KGPair

    @property
    def operator(self):
        return KreinOperator(self.matrix, self.space)


@dataclass(frozen=True, eq=False)
class ChargeOperator:
    matrix: np.ndarray
    space: KreinSpace
    pair: KGPair

    @property
    def operator(self):
        return KreinOperator(self.matrix, self.space)


def _blocks(a, b, c, d):
    return np.block([[a, b], [c, d]])


def energy_space(pair):
    n = pair.n
    I, Z = np.eye(n), np.zeros((n, n))
    gram = _blocks(pair.h, Z, Z, I)
    hil = _blocks(operator_power(pair.scale, 1.0), Z, Z, I)
    return KreinSpace(gram, hil)


def build_H(pair):
    """Energy generator ``[[0, I], [h, 2k]]`` on ``diag(h, I)``.

    The energy form is singular when ``h`` has a kernel; a
    :class:`~kreinkg.errors.StructuralError` is raised in that case.
    """
    n = pair.n
    I, Z = np.eye(n), np.zeros((n, n))
    H = _blocks(Z, I, pair.h, 2 * pair.k)
    space = energy_space(pair)
    try:
        hom = _blocks(operator_power(pair.scale, 1.0, homogeneous=True), Z, Z, I)
    except StructuralError:
        hom = None
    return EnergyOperator(H, space, hom, pair)


def charge_space(pair):
    n = pair.n
    I, Z = np.eye(n), np.zeros((n, n))
    q = _blocks(Z, I, I, Z)
    hil = _blocks(operator_power(pair.scale, 0.5), Z, Z, operator_power(pair.scale, -0.5))
    return KreinSpace(q, hil)


def build_K(pair):
    """Charge generator ``[[k, I], [h0, k]]`` on the form ``q = [[0, I], [I, 0]]``."""
    K = _blocks(pair.k, np.eye(pair.n), pair.h0, pair.k)
    return ChargeOperator(K, charge_space(pair), pair)


def build_Phi(pair, inverse=False):
    """Intertwiner ``[[I, 0], [k, I]]``; its inverse is the same with ``-k``."""
    n = pair.n
    k = -pair.k if inverse else pair.k
    return _blocks(np.eye(n), np.zeros((n, n)), k, np.eye(n))


def resolvent_H(pair, z):
    """``(H - z)^{-1} = p(z)^{-1} [[z - 2k, 1], [h, z]]`` read blockwise."""
    _check_rho(pair, z)
    z = complex(z)
    P = pencil_eval(pair, z)
    n = pair.n
    w = z * np.eye(n) - 2 * pair.k
    lw, l1 = np.split(np.linalg.solve(P, np.hstack([w, np.eye(n)])), 2, axis=1)
    return _blocks(lw, l1, l1 @ pair.h, z * l1)


def resolvent_K(pair, z):
    """``(K - z)^{-1}`` from ``l = p(z)^{-1}`` and ``u = k - z``."""
    _check_rho(pair, z)
    z = complex(z)
    n = pair.n
    u = pair.k - z * np.eye(n)
    P = pencil_eval(pair, z)
    l = np.linalg.inv(P)
    lu = l @ u
    ul = u @ l
    return _blocks(-lu, l, np.eye(n) + u @ lu, -ul)


def energy_charge_identity(pair, f):
    """Two evaluations of the energy of Cauchy data ``f = (f0, f1)``.

    Returns ``(|f1 + k f0|^2 + (f0|h f0), conj(f) . q K f)``.
    """
    f = np.asarray(f, dtype=complex).ravel()
    n = pair.n
    f0, f1 = f[:n], f[n:]
    g = f1 + pair.k @ f0
    E = float(np.real(np.vdot(g, g) + np.vdot(f0, pair.h @ f0)))
    K = build_K(pair).matrix
    Kf = K @ f
    qK = float(np.real(np.vdot(f[:n], Kf[n:]) + np.vdot(f[n:], Kf[:n])))
    return E, qK


@dataclass(frozen=True)
class ConditionsE:
    E1: float
    E2: int
    E3: float


def check_conditions_E(pair):
    """``E1 = min|eig h|``, ``E2`` = number of eigenvalues ``<= 0``, ``E3 = |k |h|^{-1/2}|``."""
    w = pair.scale.eigenvalues
    E1 = float(np.abs(w).min())
    E2 = int(np.sum(w <= 0))
    if E1 <= KERNEL_TOL * max(1.0, float(np.abs(w).max())):
        E3 = float("inf")
    else:
        E3 = spectral_norm(pair.k @ operator_power(pair.scale, -0.5, homogeneous=True))
    return ConditionsE(E1, E2, E3)


@dataclass(frozen=True, eq=False)
class Diagonalization:
    b: np.ndarray
    b_inv: np.ndarray
    r: np.ndarray
    U: np.ndarray
    U_inv: np.ndarray
    L0: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    gram_perturbation: np.ndarray
    residual: float
    form_residual: float

    @property
    def L(self):
        return self.L0 + self.V1 + self.V2

    @property
    def gram(self):
        return np.eye(self.L0.shape[0]) + self.gram_perturbation


def _psd_sqrt(A):
    w, V = np.linalg.eigh(hermitian_part(A))
    tol = PSD_CLIP * max(1.0, float(np.abs(w).max()))
    if w.min() < -tol:
        raise SplittingError(
            "h0 - k1^2 is indefinite (min eigenvalue %.3e); choose a larger cutoff "
            "radius R so that k1 is smaller" % w.min())
    w = np.clip(w, 0.0, None)
    sw = np.sqrt(w)
    b = (V * sw) @ V.conj().T
    cut = PINV_RTOL * max(float(sw.max()), 0.0)
    inv = np.where(sw > cut, 1.0 / np.where(sw > cut, sw, 1.0), 0.0)
    return b, (V * inv) @ V.conj().T


def build_diagonalization(pair, k1, k2=None):
    """Approximate diagonalization ``L = U H U^{-1} = L0 + V1 + V2``.

    ``k = k1 + k2`` and ``b = (h0 - k1^2)^{1/2}``.  With
    ``r = k2^2 + k1 k2 + k2 k1`` one has ``h = b^2 - r``.  The energy form
    transported by ``U`` is ``I + gram_perturbation`` in the Euclidean
    product.
    """
    k1 = _herm(k1, "k1")
    k2 = pair.k - k1 if k2 is None else _herm(k2, "k2")
    if np.linalg.norm(k1 + k2 - pair.k) > 1e-12 * max(1.0, np.linalg.norm(pair.k)):
        raise ValueError("k1 + k2 must equal k")
    n = pair.n
    I = np.eye(n)
    b, bi = _psd_sqrt(pair.h0 - k1 @ k1)
    r = hermitian_part(k2 @ k2 + k1 @ k2 + k2 @ k1)
    s = 1 / np.sqrt(2)
    U = s * _blocks(b, I, b, -I)
    Ui = s * _blocks(bi, bi, I, -I)
    L0 = _blocks(b, np.zeros((n, n)), np.zeros((n, n)), -b)
    V1 = np.kron(np.array([[1, -1], [-1, 1]]), pair.k)
    V2 = 0.5 * np.kron(np.array([[-1, -1], [1, 1]]), r @ bi)
    Kg = -0.5 * np.kron(np.ones((2, 2)), bi @ r @ bi)
    H = build_H(pair).matrix
    residual = float(np.linalg.norm(U @ H @ Ui - (L0 + V1 + V2), 2))
    Gt = Ui.conj().T @ _blocks(pair.h, np.zeros((n, n)), np.zeros((n, n)), I) @ Ui
    form_residual = float(np.linalg.norm(Gt - (np.eye(2 * n) + Kg), 2))
    return Diagonalization(b, bi, r, U, Ui, L0, V1, V2, Kg, residual, form_residual)


def dual_energy_gram(pair):
    """Gram of the dual energy space ``H + <h>^{1/2} H``: ``diag(I, <h>^{-1})``."""
    n = pair.n
    Z = np.zeros((n, n))
    return _blocks(np.eye(n), Z, Z, operator_power(pair.scale, -1.0))


@dataclass(frozen=True)
class ResolventBoundFit:
    constant: float
    dual_norms: np.ndarray
    energy_norms: np.ndarray


def fit_resolvent_bound(pair, zs):
    """Smallest ``C`` with ``|R(z)|_{E* -> E} <= C (1 + |R(z)|_{E})`` on the samples."""
    sp = energy_space(pair)
    Gd = dual_energy_gram(pair)
    a, e = [], []
    for z in zs:
        R = resolvent_H(pair, z)
        a.append(weighted_norm(R, Gd, sp.hilbert_gram))
        e.append(weighted_norm(R, sp.hilbert_gram))
    a, e = np.array(a), np.array(e)
    return ResolventBoundFit(float(np.max(a / (1 + e))), a, e)
