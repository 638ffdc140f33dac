"""
Small dense complex linear algebra.

Matrices are plain ``numpy`` complex arrays. Every routine accepts either a
single matrix of shape ``(n, m)`` or a stack of shape ``(..., n, m)`` and
works on the trailing two axes, so a whole batch of per-subcarrier problems
can be handled in one call.

The eigen and singular value decompositions are cyclic Jacobi iterations
(two-sided for Hermitian matrices, one-sided Hestenes for the SVD). They are
accurate and unconditionally convergent at the sizes used here (n <= 16).
Products, inverses and determinants are delegated to numpy.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

CMatrix = np.ndarray

RANK_RTOL = 1e-12
SINGULAR_RTOL = 1e-13
HERMITIAN_RTOL = 1e-10
MAX_SWEEPS = 60
_TINY = np.finfo(float).tiny


class LinAlgError(ValueError):
    """Raised when a linear algebra precondition fails."""


class SingularMatrixError(LinAlgError):
    pass


class ConvergenceError(LinAlgError):
    pass


class EigenPair(NamedTuple):
    value: complex
    vector: CMatrix


class Eig2x2(NamedTuple):
    """Batched result of :func:`eig2x2`.

    ``values`` has shape ``(..., 2)`` ordered by decreasing magnitude and
    ``vectors`` has shape ``(..., 2, 2)`` with eigenvectors in the columns.
    ``defective`` flags matrices with a repeated eigenvalue but only a single
    eigenvector; for those the second column duplicates the first.
    """

    values: np.ndarray
    vectors: np.ndarray
    defective: np.ndarray


def as_cmatrix(a) -> CMatrix:
    """Return ``a`` as a complex128 array with at least two dimensions."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim < 2:
        raise LinAlgError(f"expected a matrix, got array of shape {arr.shape}")
    return arr


def ctranspose(a: CMatrix) -> CMatrix:
    return np.conj(np.swapaxes(a, -1, -2))


def multiply(a: CMatrix, b: CMatrix) -> CMatrix:
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[-1] != b.shape[-2]:
        raise LinAlgError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def trace(a: CMatrix):
    return np.trace(a, axis1=-2, axis2=-1)


def fro_norm(a: CMatrix):
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))


def eye_like(a: CMatrix) -> CMatrix:
    n = a.shape[-1]
    return np.broadcast_to(np.eye(n, dtype=complex), a.shape[:-2] + (n, n))


def phase_normalize(vectors: CMatrix, tol: float = 1e-12) -> CMatrix:
    """Rotate each column so its first non-negligible entry is real >= 0."""
    v = np.array(vectors, dtype=complex, copy=True)
    mag = np.abs(v)
    significant = mag > tol
    # index of first significant component per column
    first = np.argmax(significant, axis=-2)
    lead = np.take_along_axis(v, first[..., None, :], axis=-2)[..., 0, :]
    lead_mag = np.abs(lead)
    phase = np.where(lead_mag > tol, np.conj(lead) / np.maximum(lead_mag, _TINY), 1.0)
    v *= phase[..., None, :]
    # exact zero imaginary part on the leading entry
    lead = np.take_along_axis(v, first[..., None, :], axis=-2)
    np.put_along_axis(v, first[..., None, :], lead.real.astype(complex), axis=-2)
    return v


def _rotation(app, aqq, apq):
    """Complex Jacobi rotation annihilating the (p, q) entry.

    Returns the 2x2 block entries ``(gpp, gpq, gqp, gqq)`` of the unitary
    ``G`` such that ``G^* [[app, apq], [conj(apq), aqq]] G`` is diagonal.
    """
    mag = np.abs(apq)
    active = mag > _TINY
    safe = np.where(active, mag, 1.0)
    zeta = (aqq - app) / (2.0 * safe)
    sgn = np.where(zeta >= 0.0, 1.0, -1.0)
    t = sgn / (np.abs(zeta) + np.hypot(1.0, zeta))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    e = np.where(active, np.conj(apq) / safe, 1.0)
    c = np.where(active, c, 1.0)
    s = np.where(active, s, 0.0)
    return c + 0j, s + 0j, -s * e, c * e


def _rotate_cols(x, p, q, gpp, gpq, gqp, gqq):
    xp = x[..., :, p].copy()
    xq = x[..., :, q]
    x[..., :, p] = xp * gpp[..., None] + xq * gqp[..., None]
    x[..., :, q] = xp * gpq[..., None] + xq * gqq[..., None]


def _rotate_rows_conj(x, p, q, gpp, gpq, gqp, gqq):
    xp = x[..., p, :].copy()
    xq = x[..., q, :]
    x[..., p, :] = xp * np.conj(gpp)[..., None] + xq * np.conj(gqp)[..., None]
    x[..., q, :] = xp * np.conj(gpq)[..., None] + xq * np.conj(gqq)[..., None]


def _check_hermitian(a: CMatrix) -> None:
    if a.shape[-1] != a.shape[-2]:
        raise LinAlgError(f"matrix must be square, got {a.shape[-2:]}")
    scale = fro_norm(a)
    skew = fro_norm(a - ctranspose(a))
    if np.any(skew > HERMITIAN_RTOL * np.maximum(scale, _TINY)):
        raise LinAlgError("matrix is not Hermitian")


def eigh(a: CMatrix, check: bool = True) -> tuple[np.ndarray, CMatrix]:
    """Cyclic Jacobi eigendecomposition of (a stack of) Hermitian matrices.

    Returns ``(values, vectors)`` with real eigenvalues sorted descending and
    phase-normalized eigenvectors in the columns of ``vectors``. Equal
    eigenvalues keep the order in which the sweeps left them.
    """
    a = as_cmatrix(a)
    if check:
        _check_hermitian(a)
    n = a.shape[-1]
    work = 0.5 * (a + ctranspose(a))
    vecs = np.array(eye_like(work))
    if n > 1:
        scale = np.maximum(fro_norm(work), _TINY)
        iu = np.triu_indices(n, 1)
        pairs = list(zip(*iu))
        for _ in range(MAX_SWEEPS):
            off = np.sqrt(2.0 * np.sum(np.abs(work[..., iu[0], iu[1]]) ** 2, axis=-1))
            if np.all(off <= 1e-14 * scale):
                break
            for p, q in pairs:
                g = _rotation(work[..., p, p].real, work[..., q, q].real, work[..., p, q])
                _rotate_cols(work, p, q, *g)
                _rotate_rows_conj(work, p, q, *g)
                work[..., q, p] = 0.0
                work[..., p, q] = 0.0
                _rotate_cols(vecs, p, q, *g)
        else:
            raise ConvergenceError(f"Jacobi sweeps did not converge within {MAX_SWEEPS} sweeps")
    values = np.diagonal(work, axis1=-2, axis2=-1).real.copy()
    order = np.argsort(-values, axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    return values, phase_normalize(vecs)


def eig_hermitian(a: CMatrix) -> list[EigenPair]:
    """Eigenpairs of a single Hermitian matrix, largest eigenvalue first."""
    a = as_cmatrix(a)
    if a.ndim != 2:
        raise LinAlgError("eig_hermitian expects a single matrix; use eigh for stacks")
    values, vecs = eigh(a)
    return [EigenPair(complex(values[i]), vecs[:, i:i + 1]) for i in range(len(values))]


def _null_vector_2x2(m):
    """Unit vector spanning the kernel of a rank-deficient 2x2 matrix."""
    # (-y, x) is annihilated by a row (x, y); use whichever row is larger
    c1 = np.stack([-m[..., 0, 1], m[..., 0, 0]], axis=-1)
    c2 = np.stack([-m[..., 1, 1], m[..., 1, 0]], axis=-1)
    n1 = np.linalg.norm(c1, axis=-1)
    n2 = np.linalg.norm(c2, axis=-1)
    v = np.where((n1 >= n2)[..., None], c1, c2)
    nv = np.maximum(n1, n2)
    fallback = nv <= _TINY
    v = np.where(fallback[..., None], np.array([1.0, 0.0], dtype=complex), v)
    nv = np.where(fallback, 1.0, nv)
    return v / nv[..., None]


def eig2x2(a: CMatrix, defect_tol: float = 1e-10) -> Eig2x2:
    """Closed-form eigendecomposition of (a stack of) general complex 2x2 matrices.

    Eigenvalues are the roots of ``x**2 - trace(a) x + det(a)``; the root with
    the larger magnitude is computed directly and the other through the
    product of the roots to avoid cancellation.
    """
    a = as_cmatrix(a)
    if a.shape[-2:] != (2, 2):
        raise LinAlgError(f"eig2x2 expects 2x2 matrices, got {a.shape[-2:]}")
    tr = a[..., 0, 0] + a[..., 1, 1]
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    disc = np.sqrt(tr * tr - 4.0 * det)
    # pick the sign that avoids cancellation
    flip = np.real(np.conj(tr) * disc) < 0
    disc = np.where(flip, -disc, disc)
    big = 0.5 * (tr + disc)
    small = np.where(np.abs(big) > _TINY, det / np.where(np.abs(big) > _TINY, big, 1.0), 0.5 * (tr - disc))
    values = np.stack([big, small], axis=-1)
    order = np.argsort(-np.abs(values), axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)

    scale = np.maximum(fro_norm(a), _TINY)
    eye = np.eye(2, dtype=complex)
    vecs = np.empty(a.shape, dtype=complex)
    for i in range(2):
        shifted = a - values[..., i, None, None] * eye
        vecs[..., :, i] = _null_vector_2x2(shifted)

    repeated = np.abs(values[..., 0] - values[..., 1]) <= defect_tol * scale
    scalar = fro_norm(a - values[..., 0, None, None] * eye) <= defect_tol * scale
    defective = repeated & ~scalar
    # a scalar matrix has the full space as eigenspace
    vecs = np.where(scalar[..., None, None], eye, vecs)
    return Eig2x2(values, phase_normalize(vecs), defective)


def eig_general_2x2(a: CMatrix) -> tuple[list[EigenPair], bool]:
    """Eigenpairs of a single general 2x2 matrix plus a defectiveness flag.

    For a defective matrix only one pair is returned.
    """
    a = as_cmatrix(a)
    if a.shape != (2, 2):
        raise LinAlgError(f"eig_general_2x2 expects a 2x2 matrix, got {a.shape}")
    res = eig2x2(a)
    pairs = [EigenPair(complex(res.values[i]), res.vectors[:, i:i + 1]) for i in range(2)]
    defective = bool(res.defective)
    if defective:
        pairs = pairs[:1]
    return pairs, defective


def svd(a: CMatrix) -> tuple[CMatrix, np.ndarray, CMatrix]:
    """One-sided (Hestenes) Jacobi SVD.

    Returns ``(u, s, v)`` with ``a = u @ diag(s) @ v^*`` where ``u`` is
    ``(..., n, k)``, ``k = min(n, m)``, singular values are sorted descending
    and ``v`` is ``(..., m, k)``. Columns of ``u`` belonging to zero singular
    values are left as zero vectors.
    """
    a = as_cmatrix(a)
    n, m = a.shape[-2:]
    if n < m:
        u, s, v = svd(ctranspose(a))
        return v, s, u
    work = np.array(a, dtype=complex, copy=True)
    vecs = np.array(np.broadcast_to(np.eye(m, dtype=complex), a.shape[:-2] + (m, m)))
    if m > 1:
        pairs = [(p, q) for p in range(m) for q in range(p + 1, m)]
        for _ in range(MAX_SWEEPS):
            worst = 0.0
            for p, q in pairs:
                xp = work[..., :, p]
                xq = work[..., :, q]
                app = np.sum(np.abs(xp) ** 2, axis=-1)
                aqq = np.sum(np.abs(xq) ** 2, axis=-1)
                apq = np.sum(np.conj(xp) * xq, axis=-1)
                denom = np.sqrt(app * aqq)
                rel = np.abs(apq) / np.maximum(denom, _TINY)
                worst = max(worst, float(np.max(rel, initial=0.0)))
                g = _rotation(app, aqq, np.where(rel > 1e-15, apq, 0.0))
                _rotate_cols(work, p, q, *g)
                _rotate_cols(vecs, p, q, *g)
            if worst <= 1e-15:
                break
        else:
            raise ConvergenceError(f"one-sided Jacobi did not converge within {MAX_SWEEPS} sweeps")
    s = np.sqrt(np.sum(np.abs(work) ** 2, axis=-2))
    order = np.argsort(-s, axis=-1, kind="stable")
    s = np.take_along_axis(s, order, axis=-1)
    work = np.take_along_axis(work, order[..., None, :], axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    u = work / np.where(s > _TINY, s, np.inf)[..., None, :]
    return u, s, vecs


def singular_values(a: CMatrix) -> np.ndarray:
    return svd(a)[1]


def smallest_singular_value(a: CMatrix):
    return singular_values(a)[..., -1]


def largest_singular_value(a: CMatrix):
    return singular_values(a)[..., 0]


def condition_number(a: CMatrix):
    s = singular_values(a)
    return s[..., 0] / np.maximum(s[..., -1], _TINY)


def inverse(a: CMatrix) -> CMatrix:
    """Inverse of (a stack of) square matrices.

    Raises :class:`SingularMatrixError` when the smallest singular value is
    below ``1e-13`` times the largest for any matrix in the stack.
    """
    a = as_cmatrix(a)
    if a.shape[-1] != a.shape[-2]:
        raise LinAlgError(f"matrix must be square, got {a.shape[-2:]}")
    s = singular_values(a)
    if np.any(s[..., -1] < SINGULAR_RTOL * s[..., 0]) or np.any(s[..., 0] == 0):
        raise SingularMatrixError("matrix is numerically singular")
    return np.linalg.inv(a)


def orthonormal_basis(a: CMatrix) -> CMatrix:
    """Orthonormal basis for the column space of a single matrix.

    The rank is the number of singular values above ``1e-12`` times the
    largest one. Columns are ordered by decreasing singular value.
    """
    a = as_cmatrix(a)
    if a.ndim != 2:
        raise LinAlgError("orthonormal_basis expects a single matrix; use dominant_basis for stacks")
    u, s, _ = svd(a)
    if s.size == 0 or s[0] == 0.0:
        raise LinAlgError("zero matrix has no column space")
    r = int(np.sum(s > RANK_RTOL * s[0]))
    return phase_normalize(u[:, :r])


def dominant_basis(a: CMatrix, r: int) -> CMatrix:
    """The ``r`` dominant left singular vectors of each matrix in a stack.

    Equals :func:`orthonormal_basis` when each matrix has rank ``r``.
    """
    u, s, _ = svd(a)
    if np.any(s[..., r - 1] <= RANK_RTOL * s[..., 0]):
        raise LinAlgError(f"matrix rank is below {r}")
    return phase_normalize(u[..., :r])


def hermitian_sqrt(a: CMatrix) -> CMatrix:
    """Principal square root of a Hermitian positive semidefinite matrix.

    Eigenvalues down to ``-1e-10 ||a||_F`` are treated as rounding noise and
    clamped to zero; anything more negative is rejected.
    """
    a = as_cmatrix(a)
    values, vecs = eigh(a)
    scale = fro_norm(a)
    if np.any(values < -1e-10 * np.maximum(scale, _TINY)[..., None]):
        raise LinAlgError("matrix is not positive semidefinite")
    root = np.sqrt(np.clip(values, 0.0, None))
    return (vecs * root[..., None, :]) @ ctranspose(vecs)


def inv_hermitian_sqrt(a: CMatrix) -> CMatrix:
    """``a^{-1/2}`` for Hermitian positive definite ``a``."""
    values, vecs = eigh(a, check=False)
    if np.any(values <= 0):
        raise SingularMatrixError("matrix is not positive definite")
    return (vecs / np.sqrt(values)[..., None, :]) @ ctranspose(vecs)


def logdet_hpd(a: CMatrix) -> np.ndarray:
    """Natural log-determinant of Hermitian positive definite matrices."""
    sign, logabs = np.linalg.slogdet(a)
    if np.any(np.abs(sign - 1.0) > 1e-8):
        raise LinAlgError("matrix is not positive definite")
    return logabs
