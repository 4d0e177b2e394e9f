"""Whitening-based refinement: whiten both spaces, rotate and re-weight
them symmetrically over a seed dictionary, then restore the original
covariances. An orthogonal Procrustes solve is available as the
alternative refinement for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lexalign.embeddings import normalize_matrix
from lexalign.errors import ContractViolation, StageError
from lexalign.metrics import SeedDictionary
from lexalign.numerics import clamped_eigh, svd, sym_sqrt


@dataclass
class WhitenResult:
    x_w: np.ndarray
    w: np.ndarray
    clamped: int
    gram_defect: float


def whiten(x: np.ndarray, eps: float | None = None) -> WhitenResult:
    """Map the rows so their Gram matrix becomes the identity.

    ``w = (x.T x)^(-1/2)``, computed with eigenvalue clamping so
    rank-deficient inputs complete; ``gram_defect`` reports how far the
    whitened Gram actually is from the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    gram = x.T @ x
    gram = (gram + gram.T) / 2.0
    w, v, clamped = clamped_eigh(gram, eps)
    wx = (v / np.sqrt(w)) @ v.T
    x_w = x @ wx
    defect = float(np.abs(x_w.T @ x_w - np.eye(x.shape[1])).max())
    return WhitenResult(x_w=x_w, w=wx, clamped=clamped, gram_defect=defect)


def _dictionary_rows(dictionary: SeedDictionary) -> tuple[np.ndarray, np.ndarray]:
    if len(dictionary) == 0:
        raise StageError("seed dictionary is empty", stage="refinement")
    # duplicated rows would double-weight their pairs
    seen = set()
    keep = []
    for i, (s, t) in enumerate(zip(dictionary.src, dictionary.tgt)):
        key = (int(s), int(t))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    idx = np.asarray(keep, dtype=np.int64)
    return dictionary.src[idx], dictionary.tgt[idx]


@dataclass
class ReweightResult:
    x_o: np.ndarray
    y_o: np.ndarray
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def symmetric_reweight(
    x_w: np.ndarray, y_w: np.ndarray, dictionary: SeedDictionary
) -> ReweightResult:
    """Rotate both whitened spaces into the shared singular basis of the
    dictionary cross-correlation and scale each axis by sqrt(S), treating
    the two languages symmetrically."""
    src, tgt = _dictionary_rows(dictionary)
    m = x_w[src].T @ y_w[tgt]
    u, s, v = svd(m)
    root = np.sqrt(s)
    x_o = x_w @ (u * root)
    y_o = y_w @ (v * root)
    return ReweightResult(x_o=x_o, y_o=y_o, u=u, s=s, v=v)


def dewhiten(x_o: np.ndarray, u: np.ndarray, x_orig: np.ndarray) -> np.ndarray:
    """Restore the original covariance: ``x_o @ u.T @ (x.T x)^(1/2) @ u``."""
    gram = x_orig.T @ x_orig
    gram = (gram + gram.T) / 2.0
    return x_o @ u.T @ sym_sqrt(gram) @ u


def procrustes_solve(
    x: np.ndarray, y: np.ndarray, dictionary: SeedDictionary
) -> np.ndarray:
    """Orthogonal map W maximizing alignment of the dictionary pairs,
    i.e. the minimizer of ||x[src] @ W - y[tgt]||_F over orthogonal W."""
    src, tgt = _dictionary_rows(dictionary)
    u, _, v = svd(x[src].T @ y[tgt])
    return u @ v.T


@dataclass
class RefineResult:
    x_c: np.ndarray
    y_c: np.ndarray
    mode: str
    x_clamped: int = 0
    y_clamped: int = 0


def refine_stage(
    x: np.ndarray,
    y: np.ndarray,
    dictionary: SeedDictionary,
    mode: str = "symmetric",
    renormalize_input: bool = True,
    eps: float | None = None,
) -> RefineResult:
    """One full refinement pass over a seed dictionary.

    Inputs are length-normalized and mean-centered first (the whitening
    formulas assume it; pipeline iterates feed back un-normalized
    matrices). Symmetric mode whitens, re-weights and de-whitens both
    spaces; procrustes mode maps the source into the target space with an
    orthogonal transform and leaves the target untouched.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if renormalize_input:
        x = normalize_matrix(x)
        y = normalize_matrix(y)
    if mode == "procrustes":
        w = procrustes_solve(x, y, dictionary)
        return RefineResult(x_c=x @ w, y_c=y, mode=mode)
    if mode != "symmetric":
        raise ContractViolation(f"unknown refinement mode {mode!r}")
    wx = whiten(x, eps)
    wy = whiten(y, eps)
    rr = symmetric_reweight(wx.x_w, wy.x_w, dictionary)
    x_c = dewhiten(rr.x_o, rr.u, x)
    y_c = dewhiten(rr.y_o, rr.v, y)
    return RefineResult(
        x_c=x_c, y_c=y_c, mode=mode, x_clamped=wx.clamped, y_clamped=wy.clamped
    )
