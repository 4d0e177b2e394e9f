"""Adversarial initialization of the forward/backward linear maps.

Two linear generators (source-to-target F and target-to-source G) are
trained against two small MLP discriminators. The generator objective
adds a cycle-consistency penalty (mean reconstruction residual of the
round trip) to the usual adversarial terms, and each generator update is
followed by a pull toward the orthogonal manifold:

    W <- (1 + beta) W - beta (W W^T) W

Gradients are computed analytically in plain NumPy; plain SGD with a
halving schedule keyed to the unsupervised selection criterion. All
randomness flows through one seeded generator, so runs are bit
reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from lexalign.embeddings import EmbeddingSpace, load_matrix, save_matrix
from lexalign.errors import ConfigError, ContractViolation, StageError
from lexalign.metrics import CslsParams, selection_criterion
from lexalign.numerics import orthogonality_defect

_LOG_FLOOR = 1e-12


@dataclass
class AlignConfig:
    lambda_cyc: float = 5.0
    beta_orth: float = 0.001
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 0.1
    lr_halving: bool = True
    discriminator_vocab_limit: int = 50000
    label_smoothing: float = 0.1
    seed: int = 0
    hidden_dim: int = 2048
    input_dropout: float = 0.1
    leaky_slope: float = 0.2
    disc_steps: int = 1
    steps_per_epoch: int | None = None  # default: vocab limit // batch size

    def validate(self) -> None:
        if self.lambda_cyc <= 0:
            raise ConfigError("lambda_cyc must be positive")
        if not 0.0 < self.beta_orth <= 0.1:
            raise ConfigError("beta_orth must lie in (0, 0.1]")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if min(self.batch_size, self.discriminator_vocab_limit, self.hidden_dim) < 1:
            raise ConfigError("counts must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.label_smoothing < 0.5:
            raise ConfigError("label_smoothing must lie in [0, 0.5)")
        if not 0.0 <= self.input_dropout < 1.0:
            raise ConfigError("input_dropout must lie in [0, 1)")
        if self.disc_steps < 1:
            raise ConfigError("disc_steps must be >= 1")


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


class Discriminator:
    """Single-hidden-layer binary classifier: input dropout, leaky-ReLU
    hidden activation, sigmoid output clipped strictly inside (0, 1)."""

    def __init__(self, w1, b1, w2, b2, dropout: float, slope: float):
        self.w1 = w1
        self.b1 = b1
        self.w2 = w2
        self.b2 = b2
        self.dropout = dropout
        self.slope = slope

    @classmethod
    def create(
        cls,
        dim: int,
        hidden: int,
        dropout: float,
        slope: float,
        rng: np.random.Generator,
    ) -> "Discriminator":
        lim1 = 1.0 / math.sqrt(dim)
        lim2 = 1.0 / math.sqrt(hidden)
        return cls(
            w1=rng.uniform(-lim1, lim1, size=(dim, hidden)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-lim2, lim2, size=(hidden, 1)),
            b2=np.zeros(1),
            dropout=dropout,
            slope=slope,
        )

    def _forward(self, v: np.ndarray):
        a1 = v @ self.w1 + self.b1
        h = np.where(a1 > 0, a1, self.slope * a1)
        a2 = h @ self.w2 + self.b2
        p = np.clip(_sigmoid(a2), _LOG_FLOOR, 1.0 - _LOG_FLOOR)
        return p, a1, h

    def predict(self, v: np.ndarray) -> np.ndarray:
        """Probability of the "real" class, dropout disabled."""
        return self._forward(np.asarray(v, dtype=np.float64))[0][:, 0]

    def input_gradient(self, v: np.ndarray, g_a2: np.ndarray) -> np.ndarray:
        """Backpropagate a gradient at the pre-sigmoid output to the input."""
        _, a1, _ = self._forward(v)
        g_h = g_a2 @ self.w2.T
        g_a1 = g_h * np.where(a1 > 0, 1.0, self.slope)
        return g_a1 @ self.w1.T


def adv_loss(disc: Discriminator, real_batch: np.ndarray, synth_batch: np.ndarray) -> float:
    """E[log D(real)] + E[log(1 - D(synth))], batch means, floored logs."""
    real_batch = np.asarray(real_batch, dtype=np.float64)
    synth_batch = np.asarray(synth_batch, dtype=np.float64)
    if real_batch.size == 0 or synth_batch.size == 0:
        raise ContractViolation("batches must be non-empty")
    p_real = disc.predict(real_batch)
    p_synth = disc.predict(synth_batch)
    return float(
        np.mean(np.log(np.maximum(p_real, _LOG_FLOOR)))
        + np.mean(np.log(np.maximum(1.0 - p_synth, _LOG_FLOOR)))
    )


def cyc_loss(f: np.ndarray, g: np.ndarray, x_batch: np.ndarray, y_batch: np.ndarray) -> float:
    """Mean round-trip reconstruction residual in both directions."""
    x = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y_batch, dtype=np.float64))
    r1 = x @ f @ g - x
    r2 = y @ g @ f - y
    return float(
        np.linalg.norm(r1, axis=1).mean() + np.linalg.norm(r2, axis=1).mean()
    )


def orthogonalize_update(w: np.ndarray, beta: float) -> np.ndarray:
    """One step of W <- (1 + beta) W - beta (W W^T) W."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != w.shape[1]:
        raise ContractViolation("orthogonalize_update requires a square matrix")
    if not 0.0 < beta <= 0.1:
        raise ContractViolation("beta must lie in (0, 0.1]")
    return (1.0 + beta) * w - beta * (w @ w.T) @ w


def generator_loss_and_grads(
    f: np.ndarray,
    g: np.ndarray,
    disc_y: Discriminator,
    disc_x: Discriminator,
    x_batch: np.ndarray,
    y_batch: np.ndarray,
    lambda_cyc: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Total generator objective and its exact gradients in F and G.

    The objective is the two adversarial losses (their real-sample terms
    are constant in F and G) plus lambda_cyc times the cyclic loss;
    dropout is not applied on the generator pass.
    """
    x = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y_batch, dtype=np.float64))
    bx, by = x.shape[0], y.shape[0]
    df = np.zeros_like(f)
    dg = np.zeros_like(g)

    xf = x @ f
    yg = y @ g
    loss = adv_loss(disc_y, y, xf) + adv_loss(disc_x, x, yg)

    # adversarial part: d/da2 log(1 - sigmoid(a2)) = -p, zero where the
    # clip or the log floor is active
    for disc, synth, source, grad in (
        (disc_y, xf, x, df),
        (disc_x, yg, y, dg),
    ):
        p = disc._forward(synth)[0]
        active = (1.0 - p > _LOG_FLOOR) & (p > _LOG_FLOOR) & (p < 1.0 - _LOG_FLOOR)
        g_a2 = np.where(active, -p, 0.0) / synth.shape[0]
        grad += source.T @ disc.input_gradient(synth, g_a2)

    # cyclic part: residual-normalized rows, direction-by-direction
    r1 = xf @ g - x
    n1 = np.linalg.norm(r1, axis=1)
    g_r1 = np.divide(r1, n1[:, None], out=np.zeros_like(r1), where=n1[:, None] > 0) / bx
    dg += lambda_cyc * (xf.T @ g_r1)
    df += lambda_cyc * (x.T @ (g_r1 @ g.T))

    r2 = yg @ f - y
    n2 = np.linalg.norm(r2, axis=1)
    g_r2 = np.divide(r2, n2[:, None], out=np.zeros_like(r2), where=n2[:, None] > 0) / by
    df += lambda_cyc * (yg.T @ g_r2)
    dg += lambda_cyc * (y.T @ (g_r2 @ f.T))

    loss += lambda_cyc * (float(n1.mean()) + float(n2.mean()))
    return loss, df, dg


def discriminator_step(
    disc: Discriminator,
    real_batch: np.ndarray,
    synth_batch: np.ndarray,
    smoothing: float,
    learning_rate: float,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One SGD step on the label-smoothed cross entropy.

    Returns (loss, accuracy at threshold 0.5). Input dropout uses the
    provided generator.
    """
    losses = 0.0
    correct = 0
    total = 0
    grads = [np.zeros_like(disc.w1), np.zeros_like(disc.b1),
             np.zeros_like(disc.w2), np.zeros_like(disc.b2)]
    for batch, target, want_high in (
        (np.asarray(real_batch, dtype=np.float64), 1.0 - smoothing, True),
        (np.asarray(synth_batch, dtype=np.float64), smoothing, False),
    ):
        v = batch
        if disc.dropout > 0.0:
            mask = (rng.random(batch.shape) >= disc.dropout) / (1.0 - disc.dropout)
            v = batch * mask
        p, a1, h = disc._forward(v)
        b = v.shape[0]
        losses += -float(
            np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
        )
        correct += int(np.sum((p[:, 0] > 0.5) == want_high))
        total += b
        g_a2 = (p - target) / b
        g_h = g_a2 @ disc.w2.T
        g_a1 = g_h * np.where(a1 > 0, 1.0, disc.slope)
        grads[0] += v.T @ g_a1
        grads[1] += g_a1.sum(axis=0)
        grads[2] += h.T @ g_a2
        grads[3] += g_a2.sum(axis=0)
    disc.w1 -= learning_rate * grads[0]
    disc.b1 -= learning_rate * grads[1]
    disc.w2 -= learning_rate * grads[2]
    disc.b2 -= learning_rate * grads[3]
    return losses, correct / max(total, 1)


def generator_step(
    f: np.ndarray,
    g: np.ndarray,
    disc_y: Discriminator,
    disc_x: Discriminator,
    x_batch: np.ndarray,
    y_batch: np.ndarray,
    config: AlignConfig,
    learning_rate: float,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """SGD step on the generator objective followed by the orthogonality
    pull on both maps. Returns the new maps plus diagnostics."""
    loss, df, dg = generator_loss_and_grads(
        f, g, disc_y, disc_x, x_batch, y_batch, config.lambda_cyc
    )
    if not math.isfinite(loss):
        raise StageError(f"non-finite generator loss {loss!r}", stage="alignment")
    f = f - learning_rate * df
    g = g - learning_rate * dg
    defect_before = orthogonality_defect(f)
    f = orthogonalize_update(f, config.beta_orth)
    g = orthogonalize_update(g, config.beta_orth)
    info = {
        "loss": loss,
        "defect_before": defect_before,
        "defect_after": orthogonality_defect(f),
    }
    return f, g, info


@dataclass
class AlignCheckpoint:
    f: np.ndarray
    g: np.ndarray
    epoch: int
    criterion: float
    disc_acc_y: float = float("nan")
    disc_acc_x: float = float("nan")


@dataclass
class AlignResult:
    f: np.ndarray
    g: np.ndarray
    checkpoints: list[AlignCheckpoint]
    warnings: list[str] = field(default_factory=list)


def select_checkpoint(checkpoints: list[AlignCheckpoint], policy: str) -> AlignCheckpoint:
    """'best' picks the highest criterion (earliest epoch wins ties);
    'epoch:N' picks that exact epoch."""
    if not checkpoints:
        raise StageError("no checkpoints recorded", stage="alignment")
    if policy == "best":
        best = checkpoints[0]
        for ck in checkpoints[1:]:
            if ck.criterion > best.criterion:
                best = ck
        return best
    if policy.startswith("epoch:"):
        try:
            epoch = int(policy.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad checkpoint policy {policy!r}") from None
        for ck in checkpoints:
            if ck.epoch == epoch:
                return ck
        raise ConfigError(f"no checkpoint recorded for epoch {epoch}")
    raise ConfigError(f"unknown checkpoint policy {policy!r}")


def train_align(
    x_space: EmbeddingSpace | np.ndarray,
    y_space: EmbeddingSpace | np.ndarray,
    config: AlignConfig,
    csls: CslsParams | None = None,
) -> AlignResult:
    """Adversarial training loop over the most frequent words.

    Records one checkpoint per epoch (plus the identity initialization as
    epoch 0) with the unsupervised selection criterion; the returned maps
    are the best-criterion checkpoint's. NaN criteria are flagged and the
    corresponding checkpoint skipped.
    """
    config.validate()
    csls = csls or CslsParams()
    xm = x_space.matrix if isinstance(x_space, EmbeddingSpace) else np.asarray(x_space)
    ym = y_space.matrix if isinstance(y_space, EmbeddingSpace) else np.asarray(y_space)
    if xm.shape[1] != ym.shape[1]:
        raise ContractViolation("spaces must share a dimension")
    if min(xm.shape[0], ym.shape[0]) < config.batch_size:
        raise ContractViolation("vocabulary smaller than the batch size")
    d = xm.shape[1]
    rng = np.random.default_rng(config.seed)
    disc_y = Discriminator.create(d, config.hidden_dim, config.input_dropout, config.leaky_slope, rng)
    disc_x = Discriminator.create(d, config.hidden_dim, config.input_dropout, config.leaky_slope, rng)
    f = np.eye(d)
    g = np.eye(d)
    xs = xm[: min(config.discriminator_vocab_limit, xm.shape[0])]
    ys = ym[: min(config.discriminator_vocab_limit, ym.shape[0])]
    steps = config.steps_per_epoch or max(1, min(xs.shape[0], ys.shape[0]) // config.batch_size)

    warnings: list[str] = []
    checkpoints = [
        AlignCheckpoint(f.copy(), g.copy(), 0, selection_criterion(xm, ym, f, g, csls))
    ]
    lr = config.learning_rate
    best_criterion = checkpoints[0].criterion

    def batch(src: np.ndarray) -> np.ndarray:
        return src[rng.integers(0, src.shape[0], size=config.batch_size)]

    for epoch in range(1, config.epochs + 1):
        acc_y = acc_x = 0.0
        for _ in range(steps):
            for _ in range(config.disc_steps):
                _, a_y = discriminator_step(
                    disc_y, batch(ys), batch(xs) @ f, config.label_smoothing, lr, rng
                )
                _, a_x = discriminator_step(
                    disc_x, batch(xs), batch(ys) @ g, config.label_smoothing, lr, rng
                )
                acc_y, acc_x = a_y, a_x
            try:
                f, g, _ = generator_step(
                    f, g, disc_y, disc_x, batch(xs), batch(ys), config, lr
                )
            except StageError as exc:
                raise StageError(str(exc), stage="alignment", iteration=epoch) from exc
        criterion = selection_criterion(xm, ym, f, g, csls)
        if math.isnan(criterion):
            warnings.append(f"epoch {epoch}: NaN selection criterion, checkpoint skipped")
        else:
            checkpoints.append(
                AlignCheckpoint(f.copy(), g.copy(), epoch, criterion, acc_y, acc_x)
            )
            if config.lr_halving:
                if criterion <= best_criterion:
                    lr /= 2.0
                else:
                    best_criterion = criterion
    chosen = select_checkpoint(checkpoints, "best")
    return AlignResult(f=chosen.f, g=chosen.g, checkpoints=checkpoints, warnings=warnings)


def config_digest(config: AlignConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_checkpoint(ckpt: AlignCheckpoint, prefix: str, config: AlignConfig) -> None:
    """Plain-text matrices plus a JSON sidecar for one checkpoint."""
    save_matrix(ckpt.f, f"{prefix}.fwd.txt")
    save_matrix(ckpt.g, f"{prefix}.bwd.txt")
    meta = {
        "epoch": ckpt.epoch,
        "criterion": ckpt.criterion,
        "config_hash": config_digest(config),
    }
    with open(f"{prefix}.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_checkpoint_maps(prefix: str) -> tuple[np.ndarray, np.ndarray]:
    return load_matrix(f"{prefix}.fwd.txt"), load_matrix(f"{prefix}.bwd.txt")
