"""Dense linear algebra helpers shared by all modules."""

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, eigsh

# Above this size spectral norms are computed by Lanczos on B^* B.
LANCZOS_MIN_DIM = 320


def hermitian_part(A):
    return 0.5 * (A + A.conj().T)


def is_hermitian(A, tol=1e-12):
    scale = max(1.0, np.linalg.norm(A, 2) if A.size else 1.0)
    return np.linalg.norm(A - A.conj().T) <= tol * scale


def eigh_function(A, func):
    """Apply ``func`` to the Hermitian matrix ``A`` through ``eigh``."""
    w, V = np.linalg.eigh(hermitian_part(A))
    fw = np.asarray(func(w))
    return (V * fw) @ V.conj().T


def hermitian_power(A, s, clip=0.0):
    """``A**s`` for Hermitian PSD ``A``.

    Eigenvalues in ``[-clip, 0]`` are set to zero before taking the power;
    anything more negative raises ``ValueError``.
    """
    w, V = np.linalg.eigh(hermitian_part(A))
    if w.size and w.min() < -clip:
        raise ValueError("matrix is not positive semi-definite (min eig %.3e)" % w.min())
    w = np.where(w < 0, 0.0, w)
    with np.errstate(divide="ignore"):
        ws = np.where(w > 0, w ** s, 0.0) if s < 0 else w ** s
    return (V * ws) @ V.conj().T


def japanese(A):
    """``<A> = (A^2 + 1)^{1/2}`` for Hermitian ``A``."""
    return eigh_function(A, lambda w: np.sqrt(w * w + 1.0))


def spectral_norm(B):
    """Largest singular value of a dense matrix or ``LinearOperator``.

    Small matrices go through LAPACK; larger ones use implicitly restarted
    Lanczos on ``B^* B`` with a fixed start vector so the result is
    reproducible.
    """
    if isinstance(B, LinearOperator):
        n = B.shape[1]
        if n < LANCZOS_MIN_DIM:
            return spectral_norm(B @ np.eye(n))
        op = B
    else:
        B = np.asarray(B)
        if B.size == 0:
            return 0.0
        if min(B.shape) < LANCZOS_MIN_DIM:
            return float(np.linalg.norm(B, 2))
        op = B
    n = op.shape[1]
    gram = LinearOperator(
        (n, n),
        matvec=lambda x: op.conj().T @ (op @ x) if not isinstance(op, LinearOperator)
        else op.rmatvec(op.matvec(x)),
        dtype=complex,
    )
    v0 = np.ones(n, dtype=complex)
    val = eigsh(gram, k=1, which="LA", v0=v0, tol=0.0, return_eigenvectors=False)
    return float(np.sqrt(max(val[0].real, 0.0)))


def cholesky_upper(G):
    """Upper Cholesky factor ``R`` with ``G = R^* R``."""
    return scipy.linalg.cholesky(hermitian_part(G), lower=False)


def weighted_norm(A, gram_in, gram_out=None):
    """Operator norm of ``A`` from ``(C^n, gram_in)`` to ``(C^m, gram_out)``.

    With ``G = R^* R`` the norm ``sup |A u|_out / |u|_in`` equals the spectral
    norm of ``R_out A R_in^{-1}``.
    """
    if gram_out is None:
        gram_out = gram_in
    R_in = cholesky_upper(gram_in)
    R_out = cholesky_upper(gram_out)
    M = R_out @ scipy.linalg.solve_triangular(R_in.T, A.T, lower=True).T
    return spectral_norm(M)


def gram_norm(u, gram):
    return float(np.sqrt(max(np.real(np.vdot(u, gram @ u)), 0.0)))


def orth_range(P, rtol=1e-8):
    """Orthonormal basis of the range of ``P`` (SVD cutoff relative to ``|P|``)."""
    U, s, _ = np.linalg.svd(P)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    return U[:, s > rtol * s[0]]


def numerical_rank(A, cutoff):
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > cutoff))
