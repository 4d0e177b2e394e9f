"""Point-set registration by Coherent Point Drift (Myronenko & Song, 2010).

One point set provides the centroids of a Gaussian mixture with equal
isotropic variances and equal weights plus a uniform outlier component;
the other set is the data. EM alternates soft assignments with a
closed-form similarity (or affine) transform update. The fitted
transform moves the centroids onto the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lexalign import kernels
from lexalign.errors import ConfigError, ContractViolation, StageError

_SIGMA2_FLOOR = 1e-10


@dataclass
class CpdConfig:
    """Settings for one registration run."""

    outlier_weight: float = 0.1
    max_iter: int = 150
    tol: float = 1e-5
    mode: str = "similarity"  # or "affine"
    point_limit: int = 5000

    def validate(self) -> None:
        if not 0.0 <= self.outlier_weight < 1.0:
            raise ConfigError("outlier_weight must be in [0, 1)")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.mode not in ("similarity", "affine"):
            raise ConfigError(f"unknown CPD mode: {self.mode!r}")
        if self.point_limit < 1:
            raise ConfigError("point_limit must be >= 1")


@dataclass
class SimilarityTransform:
    """Rotation/scale/translation tuple acting on row vectors.

    ``apply`` computes ``scale * points @ rotation.T + translation``. In
    affine mode ``rotation`` holds a general invertible matrix and
    ``scale`` stays fixed at 1.
    """

    rotation: np.ndarray
    scale: float = 1.0
    translation: np.ndarray | None = None
    mode: str = "similarity"

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        d = self.rotation.shape[0]
        if self.rotation.shape != (d, d):
            raise ContractViolation("rotation must be square")
        if self.translation is None:
            self.translation = np.zeros(d)
        else:
            self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.mode == "similarity" and self.scale <= 0:
            raise ContractViolation("scale must be positive")

    @classmethod
    def identity(cls, dim: int, mode: str = "similarity") -> "SimilarityTransform":
        return cls(rotation=np.eye(dim), scale=1.0, translation=np.zeros(dim), mode=mode)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * pts @ self.rotation.T + self.translation

    def inverse(self) -> "SimilarityTransform":
        if self.mode == "similarity":
            rot = self.rotation.T
            scale = 1.0 / self.scale
        else:
            rot = np.linalg.inv(self.rotation)
            scale = 1.0
        return SimilarityTransform(
            rotation=rot,
            scale=scale,
            translation=-scale * self.translation @ rot.T,
            mode=self.mode,
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "R": [[float(v) for v in row] for row in self.rotation],
            "s": float(self.scale),
            "t": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimilarityTransform":
        return cls(
            rotation=np.asarray(d["R"], dtype=np.float64),
            scale=float(d["s"]),
            translation=np.asarray(d["t"], dtype=np.float64),
            mode=d.get("mode", "similarity"),
        )


@dataclass
class CpdState:
    """EM state: posteriors, variance, current transform, objective trace."""

    posterior: np.ndarray | None
    sigma2: float
    transform: SimilarityTransform
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0


def _points(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1:
        raise ContractViolation(f"{name} must be a non-empty 2-d array")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return a


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, rows of a vs rows of b, shape (len(a), len(b))."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def _log_outlier_const(sigma2: float, w: float, m: int, n: int, d: int) -> float:
    # c = (2 pi sigma^2)^(D/2) * (w / (1 - w)) * (M / N), kept in log space
    if w == 0.0:
        return -math.inf
    return 0.5 * d * math.log(2.0 * math.pi * sigma2) + math.log(w / (1.0 - w)) + math.log(m / n)


def cpd_init(data, centroids, config: CpdConfig | None = None) -> CpdState:
    """Identity transform and the standard broad initial variance.

    sigma2 starts at the mean squared distance between the two sets
    divided by the dimension, floored away from zero for degenerate
    (coincident) inputs.
    """
    x = _points(data, "data")
    y = _points(centroids, "centroids")
    if x.shape[1] != y.shape[1]:
        raise ContractViolation("data and centroids must share a dimension")
    n, d = x.shape
    m = y.shape[0]
    # sum over all pairs of ||x_n - y_m||^2 without materializing the matrix
    total = (
        m * float(np.einsum("ij,ij->", x, x))
        + n * float(np.einsum("ij,ij->", y, y))
        - 2.0 * float(x.sum(axis=0) @ y.sum(axis=0))
    )
    sigma2 = max(total / (d * n * m), _SIGMA2_FLOOR)
    return CpdState(
        posterior=None,
        sigma2=sigma2,
        transform=SimilarityTransform.identity(d),
    )


def e_step(
    state: CpdState, data, centroids, config: CpdConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Soft assignments of data points to transformed centroids.

    Returns ``(P, logdenom)`` where ``P[m, n]`` is the posterior of
    centroid m for point n (column sums fall short of 1 by the outlier
    posterior) and ``logdenom`` feeds the mixture log-likelihood.
    """
    if state.sigma2 <= 0:
        raise ContractViolation("sigma2 must be positive")
    x = _points(data, "data")
    y = _points(centroids, "centroids")
    moved = state.transform.apply(y)
    sq = _sqdist(moved, x)  # (M, N)
    m, n = sq.shape
    log_c = _log_outlier_const(state.sigma2, config.outlier_weight, m, n, x.shape[1])
    return kernels.posterior_columns(sq, 0.5 / state.sigma2, log_c)


def mixture_objective(
    logdenom: np.ndarray, sigma2: float, config: CpdConfig, m: int, d: int
) -> float:
    """Negative log-likelihood of the uniform-Gaussian mixture.

    With no outlier component this is exactly the plain GMM negative
    log-likelihood that EM minimizes.
    """
    n = logdenom.shape[0]
    const = 0.5 * d * math.log(2.0 * math.pi * sigma2) + math.log(m)
    if config.outlier_weight > 0.0:
        const -= math.log(1.0 - config.outlier_weight)
    return float(n * const - logdenom.sum())


def m_step(
    state: CpdState, data, centroids, config: CpdConfig
) -> tuple[SimilarityTransform, float]:
    """Closed-form transform and variance update given current posteriors.

    Similarity mode solves the weighted Procrustes problem with a
    det(+1) correction; affine mode solves the weighted least-squares
    system. Raises when essentially all posterior mass fell on the
    outlier component.
    """
    if state.posterior is None:
        raise ContractViolation("m_step requires posteriors from a prior e_step")
    x = _points(data, "data")
    y = _points(centroids, "centroids")
    p = state.posterior
    d = x.shape[1]
    p1 = p.sum(axis=1)  # (M,)
    pt1 = p.sum(axis=0)  # (N,)
    np_mass = float(p1.sum())
    if np_mass <= 1e-12 * x.shape[0]:
        raise StageError(
            "all posterior mass assigned to the outlier component; "
            "lower outlier_weight",
            stage="registration",
        )
    mu_x = (pt1 @ x) / np_mass
    mu_y = (p1 @ y) / np_mass
    xh = x - mu_x
    yh = y - mu_y
    a = (p @ xh).T @ yh  # (D, D) weighted cross-covariance
    if config.mode == "similarity":
        u, _, vt = np.linalg.svd(a)
        c = np.ones(d)
        c[-1] = np.sign(np.linalg.det(u @ vt))
        rot = (u * c) @ vt
        denom = float(p1 @ np.einsum("ij,ij->i", yh, yh))
        trace_ar = float((a * rot).sum())
        scale = trace_ar / denom
        if scale <= 0:
            raise StageError(
                "similarity-mode scale collapsed to a non-positive value",
                stage="registration",
            )
        sigma2 = (float(pt1 @ np.einsum("ij,ij->i", xh, xh)) - scale * trace_ar) / (
            np_mass * d
        )
    else:
        gram = (yh * p1[:, None]).T @ yh
        rot = np.linalg.solve(gram.T, a.T).T  # B = A @ gram^{-1}, gram symmetric
        scale = 1.0
        sigma2 = (
            float(pt1 @ np.einsum("ij,ij->i", xh, xh)) - float((a * rot).sum())
        ) / (np_mass * d)
    translation = mu_x - scale * mu_y @ rot.T
    sigma2 = max(sigma2, _SIGMA2_FLOOR)
    return (
        SimilarityTransform(rotation=rot, scale=scale, translation=translation, mode=config.mode),
        sigma2,
    )


def run_cpd(data, centroids, config: CpdConfig) -> tuple[SimilarityTransform, CpdState]:
    """Full EM loop; stops on objective change below tol or max_iter.

    The objective trace starts with the initial-parameter value and gains
    one entry per EM cycle; it is non-increasing up to numerical slack.
    """
    config.validate()
    x = _points(data, "data")
    y = _points(centroids, "centroids")
    m, d = y.shape
    state = cpd_init(x, y, config)
    p, logdenom = e_step(state, x, y, config)
    state.posterior = p
    state.objective_trace.append(mixture_objective(logdenom, state.sigma2, config, m, d))
    for it in range(1, config.max_iter + 1):
        transform, sigma2 = m_step(state, x, y, config)
        state.transform = transform
        state.sigma2 = sigma2
        p, logdenom = e_step(state, x, y, config)
        state.posterior = p
        state.objective_trace.append(mixture_objective(logdenom, sigma2, config, m, d))
        state.iterations = it
        if abs(state.objective_trace[-2] - state.objective_trace[-1]) < config.tol:
            break
        if sigma2 <= _SIGMA2_FLOOR:
            break  # machine-exact overlap; further EM only churns rounding noise
    return state.transform, state


@dataclass
class RegistrationResult:
    x_t: np.ndarray
    y_t: np.ndarray
    forward: SimilarityTransform
    backward: SimilarityTransform
    forward_state: CpdState
    backward_state: CpdState


def transform_record(transform: SimilarityTransform, state: CpdState) -> dict:
    """JSON-ready record of one fitted transform and its EM run."""
    rec = transform.to_dict()
    rec["sigma2"] = float(state.sigma2)
    rec["iterations"] = state.iterations
    rec["objective_trace"] = [float(v) for v in state.objective_trace]
    return rec


def register_spaces(x, y, config: CpdConfig) -> RegistrationResult:
    """Register the two embedding sets in both directions.

    The forward run treats the most frequent ``point_limit`` source rows
    as centroids moving onto the target subset, giving a source-to-target
    transform that is then applied to every source row; the backward run
    swaps the roles.
    """
    config.validate()
    x = _points(x, "x")
    y = _points(y, "y")
    limit = config.point_limit
    x_sub = x[: min(limit, x.shape[0])]
    y_sub = y[: min(limit, y.shape[0])]
    t_fwd, s_fwd = run_cpd(data=y_sub, centroids=x_sub, config=config)
    t_bwd, s_bwd = run_cpd(data=x_sub, centroids=y_sub, config=config)
    return RegistrationResult(
        x_t=t_fwd.apply(x),
        y_t=t_bwd.apply(y),
        forward=t_fwd,
        backward=t_bwd,
        forward_state=s_fwd,
        backward_state=s_bwd,
    )
