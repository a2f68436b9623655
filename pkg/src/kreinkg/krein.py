"""Finite-dimensional Krein space linear algebra.

A Krein space here is ``C^n`` with an invertible Hermitian Gram matrix
``gram`` (the indefinite form ``<u|v> = u^* gram v``) together with a positive
definite ``hilbert_gram`` fixing the topology.  Operators are plain matrices
tied to such a space.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
import scipy.linalg
from numpy.polynomial import Polynomial
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist

from .errors import (ConsistencyError, ContourError, InputError,
                     PreconditionError, StructuralError)
from .linalg import (hermitian_part, is_hermitian, numerical_rank, orth_range,
                     spectral_norm)

MAX_GRAM_CONDITION = 1e12
SELFADJOINT_TOL = 1e-10
RIESZ_RANK_RTOL = 1e-8
SEMISIMPLE_MAX_COND = 1e4
PSD_RTOL = 1e-10
DEFAULT_N_QUAD = 64


@dataclass(frozen=True, eq=False)
class KreinSpace:
    gram: np.ndarray
    hilbert_gram: Optional[np.ndarray] = None

    def __post_init__(self):
        gram = np.asarray(self.gram, dtype=complex)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1] or gram.shape[0] == 0:
            raise StructuralError("gram must be a non-empty square matrix")
        if not is_hermitian(gram):
            raise StructuralError("gram is not Hermitian")
        w, V = np.linalg.eigh(hermitian_part(gram))
        aw = np.abs(w)
        if aw.min() == 0 or aw.max() / aw.min() > MAX_GRAM_CONDITION:
            raise StructuralError(
                "gram is singular or too ill-conditioned (cond %.3e > %.0e)"
                % (np.inf if aw.min() == 0 else aw.max() / aw.min(), MAX_GRAM_CONDITION))
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "_eig", (w, V))
        if self.hilbert_gram is None:
            object.__setattr__(self, "hilbert_gram", (V * aw) @ V.conj().T)
        else:
            M = np.asarray(self.hilbert_gram, dtype=complex)
            if M.shape != gram.shape or not is_hermitian(M):
                raise StructuralError("hilbert_gram must be Hermitian of the same shape")
            if np.linalg.eigvalsh(hermitian_part(M)).min() <= 0:
                raise StructuralError("hilbert_gram is not positive definite")
            object.__setattr__(self, "hilbert_gram", M)

    @property
    def dim(self):
        return self.gram.shape[0]

    @property
    def fundamental_symmetry(self):
        """``J = sign(gram)``; with ``M = |gram|`` one has ``<u|v> = (u|Jv)_M``."""
        w, V = self._eig
        return (V * np.sign(w)) @ V.conj().T

    @property
    def gram_condition(self):
        aw = np.abs(self._eig[0])
        return float(aw.max() / aw.min())

    def form(self, u, v):
        return np.vdot(u, self.gram @ v)

    def hilbert_product(self, u, v):
        return np.vdot(u, self.hilbert_gram @ v)

    def norm(self, u):
        return float(np.sqrt(max(self.hilbert_product(u, u).real, 0.0)))

    def operator_norm(self, A):
        """Operator norm of ``A`` with respect to ``hilbert_gram``."""
        from .linalg import weighted_norm
        return weighted_norm(np.asarray(A), self.hilbert_gram)


@dataclass(frozen=True, eq=False)
class KreinOperator:
    matrix: np.ndarray
    space: KreinSpace

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=complex)
        if A.shape != (self.space.dim, self.space.dim):
            raise StructuralError(
                "operator shape %s does not match space dimension %d" % (A.shape, self.space.dim))
        object.__setattr__(self, "matrix", A)

    @property
    def dim(self):
        return self.space.dim

    def with_matrix(self, M):
        return KreinOperator(M, self.space)


class RealEigenvalue(NamedTuple):
    value: float
    multiplicity: int
    riesz_index: int


class ConjugatePair(NamedTuple):
    upper: complex
    lower: complex
    riesz_index: int
    multiplicity: int


@dataclass(frozen=True)
class SpectrumClassification:
    real_eigs: List[RealEigenvalue]
    complex_pairs: List[ConjugatePair]
    pairing_residual: float
    eigenvector_condition: float
    unpaired: List[complex] = field(default_factory=list)

    @property
    def nonreal(self):
        out = []
        for p in self.complex_pairs:
            out.extend([p.upper, p.lower])
        return out


@dataclass(frozen=True, eq=False)
class OperatorScale:
    """Eigendecomposition of a Hermitian ``h`` and its Sobolev-type powers."""

    base: np.ndarray

    def __post_init__(self):
        h = hermitian_part(np.asarray(self.base, dtype=complex))
        w, V = np.linalg.eigh(h)
        object.__setattr__(self, "base", h)
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "eigenvectors", V)

    def kernel_gap(self):
        return float(np.abs(self.eigenvalues).min())

    def power(self, s, homogeneous=False):
        return operator_power(self, s, homogeneous)


def operator_power(scale, s, homogeneous=False):
    """``|h|^s`` (homogeneous) or ``<h>^s = (h^2+1)^{s/2}`` for ``s`` in [-1, 1]."""
    if abs(s) > 1:
        raise InputError("exponent s=%g outside [-1, 1]" % s)
    w, V = scale.eigenvalues, scale.eigenvectors
    if homogeneous:
        tol = 1e-12 * max(1.0, float(np.abs(w).max()))
        if np.abs(w).min() <= tol:
            raise StructuralError("homogeneous power requested but h has a (near) kernel")
        ws = np.abs(w) ** s
    else:
        ws = (w * w + 1.0) ** (0.5 * s)
    return (V * ws) @ V.conj().T


def krein_adjoint(A):
    """Krein adjoint ``gram^{-1} A^* gram``."""
    G = A.space.gram
    return A.with_matrix(np.linalg.solve(G, A.matrix.conj().T @ G))


def selfadjoint_defect(A):
    """``|A^dag - A| / |A|`` in the space's Hilbert norm."""
    Ad = krein_adjoint(A)
    nA = A.space.operator_norm(A.matrix)
    if nA == 0:
        return 0.0
    return A.space.operator_norm(Ad.matrix - A.matrix) / nA


def is_krein_selfadjoint(A, tol=SELFADJOINT_TOL):
    return selfadjoint_defect(A) <= tol


def pontryagin_negative_rank(space):
    return int(np.sum(space._eig[0] < 0))


def _scale(A):
    return max(1.0, float(np.linalg.norm(A, 2)))


def _cluster(eigs, tol):
    """Group eigenvalues closer than ``tol`` (single linkage)."""
    eigs = np.asarray(eigs, dtype=complex)
    if len(eigs) == 1:
        return [eigs]
    pts = np.column_stack([eigs.real, eigs.imag])
    labels = fcluster(linkage(pdist(pts), method="single"), t=tol, criterion="distance")
    clusters = [eigs[labels == lab] for lab in np.unique(labels)]
    clusters.sort(key=lambda c: (round(float(c.mean().real), 12), float(c.mean().imag)))
    return clusters


def _cluster_tol(A, eigs=None):
    if eigs is None:
        eigs = np.linalg.eigvals(A)
    return 1e-6 * max(1.0, float(np.abs(eigs).max()))


def _gap_radius(center, others):
    if len(others) == 0:
        return 1.0
    return 0.5 * float(np.min(np.abs(np.asarray(others) - center)))


def riesz_projection(A, lam, radius=None, n_quad=DEFAULT_N_QUAD, guard=None, eigs=None):
    """Riesz projection onto the eigenvalue (cluster) at ``lam``.

    Trapezoidal rule on the circle ``|z - lam| = radius``; the default radius
    is half the distance to the rest of the spectrum.
    """
    M = A.matrix if isinstance(A, KreinOperator) else np.asarray(A, dtype=complex)
    n = M.shape[0]
    if eigs is None:
        eigs = np.linalg.eigvals(M)
    tol = _cluster_tol(M, eigs)
    inside = np.abs(eigs - lam) <= tol
    if not inside.any():
        raise PreconditionError("%r is not an eigenvalue (closest at distance %.3e)"
                                % (lam, np.abs(eigs - lam).min()))
    others = eigs[~inside]
    if radius is None:
        radius = _gap_radius(lam, others)
    if guard is None:
        guard = 1e-2 * radius
    d_in = np.abs(eigs[inside] - lam).max()
    if d_in > radius - guard or (len(others) and np.abs(others - lam).min() < radius + guard):
        raise ContourError("circle of radius %.3e around %r does not separate the eigenvalue"
                           % (radius, lam))
    theta = 2 * np.pi * (np.arange(n_quad) + 0.5) / n_quad
    E = np.zeros((n, n), dtype=complex)
    I = np.eye(n)
    for th in theta:
        dz = radius * np.exp(1j * th)
        E += dz * np.linalg.inv((lam + dz) * I - M)
    return E / n_quad


def _riesz_index(M, lam, others, mult, scale):
    if mult == 1:
        return 1
    E = riesz_projection(M, lam, eigs=np.concatenate([np.full(mult, lam), others]))
    Q = orth_range(E)
    B = Q.conj().T @ (M - lam * np.eye(M.shape[0])) @ Q
    # A cluster of distinct but nearly equal eigenvalues is semisimple when the
    # compressed block has a well-conditioned eigenbasis; a perturbed Jordan
    # block has nearly parallel eigenvectors instead.
    w, W = np.linalg.eig(B)
    if len(np.unique(w)) == len(w) and np.linalg.cond(W) < SEMISIMPLE_MAX_COND:
        return 1
    P = np.eye(B.shape[0], dtype=complex)
    for j in range(1, mult + 1):
        P = P @ B
        if numerical_rank(P, RIESZ_RANK_RTOL * scale ** j) == 0:
            return j
    return mult


def classify_spectrum(A, pair_tol=1e-8, certified=None):
    """Split the spectrum into real eigenvalues and conjugate pairs.

    ``certified`` says whether ``A`` is known to be Krein-self-adjoint; when
    ``None`` it is checked.  A pairing failure on a certified operator raises
    :class:`ConsistencyError`.
    """
    M = A.matrix if isinstance(A, KreinOperator) else np.asarray(A, dtype=complex)
    if certified is None:
        certified = isinstance(A, KreinOperator) and is_krein_selfadjoint(A)
    scale = _scale(M)
    eigs, V = np.linalg.eig(M)
    try:
        vcond = float(np.linalg.cond(V))
    except np.linalg.LinAlgError:
        vcond = np.inf
    tol = _cluster_tol(M, eigs)
    clusters = _cluster(eigs, tol)
    centers = [complex(c.mean()) for c in clusters]
    real, upper, lower = [], [], []
    for c, z in zip(clusters, centers):
        others = np.concatenate([cc for cc in clusters if cc is not c]) if len(clusters) > 1 \
            else np.zeros(0, dtype=complex)
        if abs(z.imag) <= tol:
            idx = _riesz_index(M, z.real, others, len(c), scale)
            real.append(RealEigenvalue(float(z.real), len(c), idx))
        elif z.imag > 0:
            upper.append((z, len(c), others))
        else:
            lower.append((z, len(c), others))
    pairs, unpaired, residual = [], [], 0.0
    free = list(range(len(lower)))
    for z, mult, others in upper:
        if free:
            j = min(free, key=lambda i: abs(lower[i][0] - z.conjugate()))
            w, wm, _ = lower[j]
            res = abs(w - z.conjugate())
            if wm == mult and res <= max(pair_tol, 10 * tol):
                free.remove(j)
                residual = max(residual, res)
                idx = _riesz_index(M, z, others, mult, scale)
                pairs.append(ConjugatePair(z, w, idx, mult))
                continue
        unpaired.append(z)
    unpaired.extend(lower[i][0] for i in free)
    if certified and unpaired:
        raise ConsistencyError("non-real eigenvalues without conjugate partner: %s" % unpaired)
    return SpectrumClassification(real, pairs, residual, vcond, unpaired)


def pp_projection(A, n_quad=DEFAULT_N_QUAD):
    """Projection onto the non-real point spectrum: sum of ``E(l) + E(conj l)``."""
    if not is_krein_selfadjoint(A):
        raise PreconditionError("pp_projection needs a Krein-self-adjoint operator "
                                "(defect %.3e)" % selfadjoint_defect(A))
    M = A.matrix
    eigs = np.linalg.eigvals(M)
    tol = _cluster_tol(M, eigs)
    P = np.zeros_like(M)
    for c in _cluster(eigs, tol):
        z = complex(c.mean())
        if abs(z.imag) > tol:
            P += riesz_projection(M, z, n_quad=n_quad, eigs=eigs)
    return P


def _as_polynomial(p):
    if isinstance(p, Polynomial):
        coef = p.coef
    else:
        coef = np.asarray(p)
    if np.iscomplexobj(coef):
        if np.abs(coef.imag).max(initial=0) > 0:
            raise InputError("definitizing polynomial must have real coefficients")
        coef = coef.real
    return Polynomial(np.asarray(coef, dtype=float))


def _hilbert_frame(A):
    R = scipy.linalg.cholesky(hermitian_part(A.space.hilbert_gram), lower=False)
    return R, R @ A.matrix @ np.linalg.inv(R)


def polynomial_of_operator(A, p):
    """``p(A)`` evaluated by Horner in the frame where ``hilbert_gram = I``.

    The similarity keeps rounding proportional to the eigenvalue scale rather
    than to the (possibly much larger) Euclidean norm of ``A``.
    """
    p = _as_polynomial(p)
    R, Ah = _hilbert_frame(A)
    n = A.dim
    P = np.zeros((n, n), dtype=complex)
    for c in p.coef[::-1]:
        P = P @ Ah + c * np.eye(n)
    return np.linalg.solve(R, P @ R)


def verify_definitizing(A, p):
    """Check ``<u|p(A)u> >= 0``; returns ``(ok, min eigenvalue of the form)``.

    The tolerance is relative to ``|gram p(A)|``, floored by the size of the
    terms summed in Horner's scheme so that ``p(A) = 0`` is not judged on
    rounding noise alone.
    """
    p = _as_polynomial(p)
    F = hermitian_part(A.space.gram @ polynomial_of_operator(A, p))
    lo = float(np.linalg.eigvalsh(F).min())
    _, Ah = _hilbert_frame(A)
    rho = np.linalg.norm(Ah, 2)
    terms = np.linalg.norm(A.space.gram, 2) * float(
        np.sum(np.abs(p.coef) * rho ** np.arange(len(p.coef))))
    ok = lo >= -PSD_RTOL * max(spectral_norm(F), 1e-3 * terms)
    return bool(ok), lo


@dataclass(frozen=True)
class DefinitizingCandidate:
    polynomial: Polynomial
    verified: bool
    min_form_eigenvalue: float

    @property
    def degree(self):
        return self.polynomial.degree()


def krein_type(A, lam, multiplicity=1, eigs=None):
    """Signature of the Krein form on the generalized eigenspace of real ``lam``.

    Returns ``(n_pos, n_neg, n_zero)``.
    """
    M = A.matrix
    G = A.space.gram
    if multiplicity == 1:
        w, V = np.linalg.eig(M)
        v = V[:, np.argmin(np.abs(w - lam))]
        v = v / np.linalg.norm(v)
        q = float(np.real(np.vdot(v, G @ v)))
        t = 1e-8 * np.linalg.norm(G, 2)
        return (int(q > t), int(q < -t), int(abs(q) <= t))
    E = riesz_projection(M, lam, eigs=eigs)
    Q = orth_range(E)
    ev = np.linalg.eigvalsh(hermitian_part(Q.conj().T @ G @ Q))
    t = 1e-8 * np.linalg.norm(G, 2)
    return (int(np.sum(ev > t)), int(np.sum(ev < -t)), int(np.sum(np.abs(ev) <= t)))


def critical_candidates(A, classification=None):
    """Real eigenvalues that are not of positive type, with their Riesz index."""
    if classification is None:
        classification = classify_spectrum(A)
    eigs = np.linalg.eigvals(A.matrix)
    out = []
    for r in classification.real_eigs:
        pos, neg, zero = krein_type(A, r.value, r.multiplicity, eigs=eigs)
        if neg or zero or r.riesz_index > 1:
            out.append((r.value, r.riesz_index))
    return out


def suggest_definitizing(A, classification=None):
    """Candidate definitizing polynomials ordered by degree, each verified."""
    if classification is None:
        classification = classify_spectrum(A)
    lam = Polynomial([0.0, 1.0])
    p0 = Polynomial([1.0])
    for pair in classification.complex_pairs:
        mu = pair.upper
        quad = Polynomial([abs(mu) ** 2, -2 * mu.real, 1.0])
        p0 = p0 * quad ** pair.riesz_index
    crit = critical_candidates(A, classification)
    factors = [(lam - xi) ** (2 * ((nu + 1) // 2)) for xi, nu in crit]
    raw = [p0, -p0, lam * p0, -lam * p0]
    for f in factors:
        raw += [f * p0, -f * p0]
    if len(factors) > 1:
        prod = Polynomial([1.0])
        for f in factors:
            prod = prod * f
        raw += [prod * p0, -prod * p0]
    out = []
    for p in raw:
        ok, lo = verify_definitizing(A, p)
        out.append(DefinitizingCandidate(p, ok, lo))
    out.sort(key=lambda c: c.degree)
    return out
