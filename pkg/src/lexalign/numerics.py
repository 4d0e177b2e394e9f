"""Dense linear-algebra primitives: SVD with a fixed sign convention,
symmetric matrix square roots, and an orthogonality measure.

All functions are pure and deterministic; repeated calls on the same
input return bit-identical results within a process.
"""

from __future__ import annotations

import numpy as np

from lexalign.errors import ContractViolation, NumericalFailure

#: relative eigenvalue clamp applied when no explicit floor is given;
#: keeps whitening well-posed on rank-deficient inputs
DEFAULT_EIG_CLAMP = 1e-10


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ContractViolation(f"{name} must be a 2-d array with positive shape")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return a


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``a = U @ diag(s) @ V.T`` with deterministic signs.

    The sign of each (U column, V column) pair is flipped so that the
    largest-magnitude entry of the U column is positive, which makes the
    factorization reproducible across runs.
    """
    a = _as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        cond = float(np.linalg.norm(a)) if a.size else float("inf")
        raise NumericalFailure(f"SVD did not converge: {exc}", cond) from exc
    v = vt.T
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return u, s, v


def _check_symmetric(a: np.ndarray) -> None:
    tol = 1e-10 * max(1.0, float(np.abs(a).max()))
    if a.shape[0] != a.shape[1] or float(np.abs(a - a.T).max()) > tol:
        raise ContractViolation("input must be symmetric")


def clamped_eigh(a, eps: float | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Eigendecomposition of a symmetric matrix with eigenvalues floored.

    Returns ``(w, V, clamped)`` where eigenvalues below the floor were
    raised to it and ``clamped`` counts how many. With ``eps=None`` the
    floor is ``DEFAULT_EIG_CLAMP`` times the largest eigenvalue.
    """
    a = _as_matrix(a)
    _check_symmetric(a)
    w, v = np.linalg.eigh(a)
    if eps is None:
        eps = DEFAULT_EIG_CLAMP * max(float(w[-1]), np.finfo(np.float64).tiny)
    elif eps <= 0:
        raise ContractViolation("eps must be positive")
    clamped = int(np.sum(w < eps))
    w = np.maximum(w, eps)
    return w, v, clamped


def sym_sqrt(a, eps: float | None = None) -> np.ndarray:
    """Symmetric positive square root of a symmetric PSD matrix."""
    w, v, _ = clamped_eigh(a, eps)
    out = (v * np.sqrt(w)) @ v.T
    return (out + out.T) / 2.0


def sym_inv_sqrt(a, eps: float | None = None) -> np.ndarray:
    """Symmetric inverse square root of a symmetric PSD matrix."""
    w, v, _ = clamped_eigh(a, eps)
    out = (v / np.sqrt(w)) @ v.T
    return (out + out.T) / 2.0


def orthogonality_defect(a) -> float:
    """Frobenius norm of ``a @ a.T - I`` for a square matrix."""
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ContractViolation("orthogonality defect requires a square matrix")
    return float(np.linalg.norm(a @ a.T - np.eye(a.shape[0])))
