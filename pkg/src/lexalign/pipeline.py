"""End-to-end orchestration: adversarial (or injected) initialization,
iterated refinement (whitening re-weighting, then point-set registration),
an unsupervised stopping rule, and final dictionary generation.

Each refinement iteration induces a fresh seed dictionary from the
bidirectional CSLS score, rebuilds the two spaces, registers them, and
records the selection criterion. The loop halts once the criterion has
been below its running best for two consecutive iterations (or at the
iteration cap) and the best-criterion iterate is restored.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from lexalign.adversarial import AlignConfig, select_checkpoint, train_align
from lexalign.embeddings import EmbeddingSpace, save_vec
from lexalign.errors import ConfigError, ContractViolation, StageError
from lexalign.metrics import (
    CslsParams,
    SeedDictionary,
    apply_map,
    evaluate_p_at_k,
    induce_dictionary,
    retrieve_topk,
    selection_criterion,
)
from lexalign.registration import CpdConfig, register_spaces, transform_record
from lexalign.whitening import refine_stage


@dataclass
class PipelineConfig:
    align: bool = True
    align_config: AlignConfig = field(default_factory=AlignConfig)
    csls: CslsParams = field(default_factory=CslsParams)
    cpd: CpdConfig = field(default_factory=CpdConfig)
    max_refine_iters: int = 5
    refine_mode: str = "symmetric"
    use_correspond: bool = True
    use_transform: bool = True
    correspond_from_original: bool = False
    checkpoint_policy: str = "best"
    init_fwd: np.ndarray | None = None
    init_bwd: np.ndarray | None = None
    seed: int = 0
    record_timings: bool = False
    eval_k: int = 5

    def validate(self) -> None:
        if self.max_refine_iters < 1:
            raise ConfigError("max_refine_iters must be >= 1")
        if self.refine_mode not in ("symmetric", "procrustes"):
            raise ConfigError(f"unknown refine mode {self.refine_mode!r}")
        if not self.align and self.checkpoint_policy != "best":
            raise ConfigError(
                "a checkpoint policy requires the adversarial stage; "
                "drop --skip-gan or the --checkpoint option"
            )
        if self.align and self.init_fwd is not None:
            raise ConfigError("an initial map conflicts with the adversarial stage")
        self.align_config.validate()
        self.csls.validate()
        self.cpd.validate()

    def snapshot(self) -> dict:
        snap = {
            "align": self.align,
            "align_config": asdict(self.align_config),
            "csls": asdict(self.csls),
            "cpd": asdict(self.cpd),
            "max_refine_iters": self.max_refine_iters,
            "refine_mode": self.refine_mode,
            "use_correspond": self.use_correspond,
            "use_transform": self.use_transform,
            "correspond_from_original": self.correspond_from_original,
            "checkpoint_policy": self.checkpoint_policy,
            "init_map_provided": self.init_fwd is not None,
            "seed": self.seed,
            "eval_k": self.eval_k,
        }
        return snap


def stopping_index(criteria, patience: int = 2) -> tuple[int, int]:
    """Walk a criterion trace with the two-strikes halting rule.

    Returns ``(stop_after, best)`` as 0-based indices: the loop runs
    through iteration ``stop_after`` and the ``best`` iterate is the one
    to restore. An iteration strikes when its criterion fails to exceed
    the running best; two consecutive strikes halt the walk.
    """
    best = -math.inf
    best_i = -1
    strikes = 0
    last = -1
    for i, c in enumerate(criteria):
        last = i
        if c > best:
            best, best_i, strikes = c, i, 0
        else:
            strikes += 1
            if strikes >= patience:
                return i, best_i
    return last, best_i


@dataclass
class IterationRecord:
    index: int
    criterion: float | None
    dict_size: int
    timings: dict | None = None


@dataclass
class PipelineResult:
    src_vocab: tuple[str, ...]
    tgt_vocab: tuple[str, ...]
    x_refined: np.ndarray
    y_refined: np.ndarray
    fwd: object
    bwd: object
    dictionary: SeedDictionary
    iterations: list[IterationRecord]
    chosen_iteration: int
    warnings: list[str]
    config: PipelineConfig
    align_info: dict | None = None
    transforms: dict | None = None

    @property
    def x_mapped(self) -> np.ndarray:
        return apply_map(self.fwd, self.x_refined)

    @property
    def y_mapped(self) -> np.ndarray:
        return apply_map(self.bwd, self.y_refined)


def _criterion_or_warn(x, y, fwd, bwd, csls, warnings, label) -> float:
    value = selection_criterion(x, y, fwd, bwd, csls)
    if math.isnan(value):
        warnings.append(f"{label}: NaN selection criterion")
        return -math.inf
    return value


def run_pipeline(
    src: EmbeddingSpace, tgt: EmbeddingSpace, config: PipelineConfig
) -> PipelineResult:
    """Run initialization, the refinement loop, and dictionary generation.

    Inputs are expected to be normalized (unit rows, then centered).
    Raises StageError with the iteration index if a stage fails; an empty
    induced dictionary stops the loop on the previous iterate with a
    warning.
    """
    config.validate()
    if src.dim != tgt.dim:
        raise ContractViolation("source and target dimensions differ")
    x0 = src.matrix
    y0 = tgt.matrix
    warnings: list[str] = []
    align_info = None

    if config.align:
        result = train_align(x0, y0, config.align_config, config.csls)
        warnings.extend(result.warnings)
        chosen = select_checkpoint(result.checkpoints, config.checkpoint_policy)
        fwd, bwd = chosen.f, chosen.g
        align_info = {
            "epochs": max(ck.epoch for ck in result.checkpoints),
            "chosen_epoch": chosen.epoch,
            "criterion": chosen.criterion,
        }
    elif config.init_fwd is not None:
        fwd = np.asarray(config.init_fwd, dtype=np.float64)
        if fwd.shape != (src.dim, src.dim):
            raise ConfigError("initial map shape must match the embedding dimension")
        bwd = (
            np.asarray(config.init_bwd, dtype=np.float64)
            if config.init_bwd is not None
            else np.linalg.inv(fwd)
        )
        align_info = {"injected_map": True}
    else:
        fwd = bwd = None

    xc, yc = x0, y0
    iterations: list[IterationRecord] = []
    transforms = None
    best_state = (xc, yc, fwd, bwd, None)
    best_crit = -math.inf
    chosen_iteration = 0
    run_loop = config.use_correspond or config.use_transform

    if run_loop and not config.use_correspond and (fwd is not None):
        # registration needs roughly comparable spaces; bake the forward
        # map in and continue map-free
        xc = apply_map(fwd, xc)
        fwd = bwd = None
        warnings.append("correspond disabled: forward map baked into the source space")

    if run_loop:
        strikes = 0
        for t in range(1, config.max_refine_iters + 1):
            timings: dict[str, float] = {}
            tick = time.perf_counter()
            dictionary = induce_dictionary(xc, yc, fwd, bwd, config.csls)
            timings["induce"] = time.perf_counter() - tick
            if len(dictionary) == 0:
                warnings.append(f"iteration {t}: empty induced dictionary, stopping")
                break
            try:
                if config.use_correspond:
                    bx, by = (x0, y0) if config.correspond_from_original else (xc, yc)
                    tick = time.perf_counter()
                    rr = refine_stage(bx, by, dictionary, mode=config.refine_mode)
                    timings["refine"] = time.perf_counter() - tick
                    xc, yc = rr.x_c, rr.y_c
                    fwd = bwd = None
                if config.use_transform:
                    tick = time.perf_counter()
                    reg = register_spaces(xc, yc, config.cpd)
                    timings["register"] = time.perf_counter() - tick
                    fwd, bwd = reg.forward, reg.backward
                    transforms = {
                        "forward": transform_record(reg.forward, reg.forward_state),
                        "backward": transform_record(reg.backward, reg.backward_state),
                    }
            except StageError as exc:
                raise StageError(str(exc), stage=exc.stage, iteration=t) from exc
            tick = time.perf_counter()
            crit = _criterion_or_warn(
                xc, yc, fwd, bwd, config.csls, warnings, f"iteration {t}"
            )
            timings["criterion"] = time.perf_counter() - tick
            iterations.append(
                IterationRecord(
                    index=t,
                    criterion=None if crit == -math.inf else crit,
                    dict_size=len(dictionary),
                    timings=timings if config.record_timings else None,
                )
            )
            if crit > best_crit:
                best_crit = crit
                best_state = (xc, yc, fwd, bwd, transforms)
                chosen_iteration = t
                strikes = 0
            else:
                strikes += 1
                if strikes >= 2:
                    break

    if chosen_iteration > 0:
        xc, yc, fwd, bwd, transforms = best_state
    else:
        xc, yc, fwd, bwd = best_state[:4]
        transforms = None

    final_dictionary = induce_dictionary(xc, yc, fwd, bwd, config.csls)
    return PipelineResult(
        src_vocab=src.vocab,
        tgt_vocab=tgt.vocab,
        x_refined=xc,
        y_refined=yc,
        fwd=fwd,
        bwd=bwd,
        dictionary=final_dictionary,
        iterations=iterations,
        chosen_iteration=chosen_iteration,
        warnings=warnings,
        config=config,
        align_info=align_info,
        transforms=transforms,
    )


def evaluate_result(
    result: PipelineResult, gold: dict[str, set[str]], k: int = 5
) -> dict:
    """Precision of bidirectional CSLS retrieval against a gold mapping.

    Retrieval runs over the full target vocabulary; gold sources missing
    from the source vocabulary count as misses and are tallied as OOV.
    """
    index = {tok: i for i, tok in enumerate(result.src_vocab)}
    present = [tok for tok in gold if tok in index]
    predictions: dict[str, list[str]] = {}
    if present:
        rows = np.asarray([index[tok] for tok in present], dtype=np.int64)
        idx, _ = retrieve_topk(
            result.x_refined,
            result.y_refined,
            result.fwd,
            result.bwd,
            result.config.csls,
            rows,
            k,
        )
        for tok, row in zip(present, idx):
            predictions[tok] = [result.tgt_vocab[int(j)] for j in row]
    p1 = evaluate_p_at_k(predictions, gold, 1)
    pk = evaluate_p_at_k(predictions, gold, k)
    return {
        "p_at_1": p1.precision,
        f"p_at_{k}": pk.precision,
        "oov_count": p1.oov,
        "evaluated": p1.evaluated,
    }


def build_report(
    result: PipelineResult, evaluation: dict | None = None
) -> dict:
    report = {
        "config": result.config.snapshot(),
        "align": result.align_info,
        "iterations": [
            {
                "criterion": rec.criterion,
                "dict_size": rec.dict_size,
                "timings": rec.timings,
            }
            for rec in result.iterations
        ],
        "chosen_iteration": result.chosen_iteration,
        "dictionary_size": len(result.dictionary),
        "warnings": result.warnings,
    }
    if evaluation is not None:
        report.update(evaluation)
    return report


def generate_output(
    result: PipelineResult,
    out_dir,
    gold: dict[str, set[str]] | None = None,
    precision: int = 6,
) -> dict:
    """Write the mapped spaces, final dictionary, transforms, and report.

    Returns the report dict. With a gold mapping, P@1 and P@k enter the
    report; otherwise the precision fields are omitted entirely.
    """
    import os

    os.makedirs(str(out_dir), exist_ok=True)
    join = lambda name: os.path.join(str(out_dir), name)

    save_vec(EmbeddingSpace(result.src_vocab, result.x_mapped), join("source_mapped.vec"), precision)
    save_vec(EmbeddingSpace(result.tgt_vocab, result.y_mapped), join("target_mapped.vec"), precision)
    save_vec(EmbeddingSpace(result.src_vocab, result.x_refined), join("source_refined.vec"), precision)
    save_vec(EmbeddingSpace(result.tgt_vocab, result.y_refined), join("target_refined.vec"), precision)
    result.dictionary.to_tsv(result.src_vocab, result.tgt_vocab, join("dictionary.tsv"))
    if result.transforms is not None:
        with open(join("transforms.json"), "w", encoding="utf-8") as fh:
            json.dump(result.transforms, fh, sort_keys=True, indent=2)
            fh.write("\n")

    evaluation = None
    if gold is not None:
        evaluation = evaluate_result(result, gold, k=result.config.eval_k)
    report = build_report(result, evaluation)
    with open(join("report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return report
