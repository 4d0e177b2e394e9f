"""Command-line front end.

Subcommands:
  synth    generate a synthetic benchmark pair with known gold mapping
  align    run the full alignment pipeline on two .vec files
  eval     score an aligned space pair against a gold dictionary
  induce   induce a dictionary from two already-aligned .vec files

Option precedence: command-line flag > --config file > built-in default.
Exit codes: 0 success, 1 runtime or stage failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from lexalign import embeddings, metrics, pipeline
from lexalign.adversarial import AlignConfig
from lexalign.errors import ConfigError, LexalignError
from lexalign.metrics import CslsParams
from lexalign.registration import CpdConfig

log = logging.getLogger("lexalign")

_DEFAULTS = {
    "max_vocab": 200000,
    "lambda_cyc": 5.0,
    "disc_vocab": 50000,
    "dropout": 0.1,
    "csls_k": 10,
    "induce_limit": 25000,
    "cpd_points": 5000,
    "cpd_w": 0.1,
    "cpd_mode": "similarity",
    "cpd_max_iter": 150,
    "cpd_tol": 1e-5,
    "refine": "symmetric",
    "checkpoint": "best",
    "seed": 0,
    "epochs": 40,
    "batch_size": 32,
    "lr": 0.1,
    "hidden": 2048,
    "label_smoothing": 0.1,
    "beta_orth": 0.001,
    "max_refine_iters": 5,
    "eval_k": 5,
    "skip_gan": False,
    "skip_correspond": False,
    "skip_transform": False,
    "correspond_from_original": False,
    "timings": False,
    "n": 1000,
    "dim": 20,
    "noise": 0.0,
    "kind": "orthogonal",
    "clusters": 10,
    "precision": 9,
}


def _read_config_file(path: str) -> dict:
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" in line:
                    key, _, val = line.partition("=")
                else:
                    parts = line.split(None, 1)
                    if len(parts) != 2:
                        raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                    key, val = parts
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def _coerce(value: str, like):
    if isinstance(like, bool):
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


class _Options:
    """Flag > config file > default resolution for one invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_values = (
            _read_config_file(args.config) if getattr(args, "config", None) else {}
        )

    def __getattr__(self, key: str):
        explicit = getattr(self.args, key, None)
        if explicit is not None:
            return explicit
        if key in self.file_values:
            if key not in _DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            return _coerce(self.file_values[key], _DEFAULTS[key])
        if key in _DEFAULTS:
            return _DEFAULTS[key]
        raise AttributeError(key)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexalign",
        description="Unsupervised bilingual word-embedding alignment toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic benchmark pair")
    synth.add_argument("--n", type=int)
    synth.add_argument("--dim", type=int)
    synth.add_argument("--noise", type=float)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--kind", choices=list(embeddings.SYNTH_KINDS))
    synth.add_argument("--clusters", type=int)
    synth.add_argument("--precision", type=int)
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--config")

    align = sub.add_parser("align", help="run the alignment pipeline")
    align.add_argument("--src", required=True)
    align.add_argument("--tgt", required=True)
    align.add_argument("--out-dir", required=True)
    align.add_argument("--gold")
    align.add_argument("--config")
    align.add_argument("--max-vocab", type=int)
    align.add_argument("--lambda-cyc", type=float)
    align.add_argument("--disc-vocab", type=int)
    align.add_argument("--dropout", type=float)
    align.add_argument("--csls-k", type=int)
    align.add_argument("--induce-limit", type=int)
    align.add_argument("--cpd-points", type=int)
    align.add_argument("--cpd-w", type=float)
    align.add_argument("--cpd-mode", choices=["similarity", "affine"])
    align.add_argument("--cpd-max-iter", type=int)
    align.add_argument("--cpd-tol", type=float)
    align.add_argument("--refine", choices=["symmetric", "procrustes"])
    align.add_argument("--skip-gan", action="store_true", default=None)
    align.add_argument("--skip-correspond", action="store_true", default=None)
    align.add_argument("--skip-transform", action="store_true", default=None)
    align.add_argument(
        "--correspond-from-original", action="store_true", default=None,
        help="re-whiten the ingested spaces each iteration instead of the previous iterate",
    )
    align.add_argument("--checkpoint", metavar="best|epoch:N")
    align.add_argument("--init-map", help="matrix file used instead of the adversarial stage")
    align.add_argument("--seed", type=int)
    align.add_argument("--epochs", type=int)
    align.add_argument("--batch-size", type=int)
    align.add_argument("--lr", type=float)
    align.add_argument("--hidden", type=int)
    align.add_argument("--label-smoothing", type=float)
    align.add_argument("--beta-orth", type=float)
    align.add_argument("--max-refine-iters", type=int)
    align.add_argument("--eval-k", type=int)
    align.add_argument("--timings", action="store_true", default=None)

    ev = sub.add_parser("eval", help="evaluate aligned spaces against a gold dictionary")
    ev.add_argument("--src-mapped", required=True)
    ev.add_argument("--tgt", required=True)
    ev.add_argument("--gold", required=True)
    ev.add_argument("--csls-k", type=int)
    ev.add_argument("--eval-k", type=int)
    ev.add_argument("--max-vocab", type=int)
    ev.add_argument("--config")

    induce = sub.add_parser("induce", help="induce a dictionary from aligned spaces")
    induce.add_argument("--src", required=True)
    induce.add_argument("--tgt", required=True)
    induce.add_argument("--out", required=True)
    induce.add_argument("--fwd-map", help="row-acting matrix file for the forward map")
    induce.add_argument("--bwd-map", help="row-acting matrix file for the backward map")
    induce.add_argument("--csls-k", type=int)
    induce.add_argument("--induce-limit", type=int)
    induce.add_argument("--max-vocab", type=int)
    induce.add_argument("--config")

    return parser


def _cmd_synth(opt: _Options) -> int:
    pair = embeddings.synth_pair(
        n=opt.n,
        d=opt.dim,
        noise_sigma=opt.noise,
        seed=opt.seed,
        kind=opt.kind,
        clusters=opt.clusters,
    )
    out = str(opt.args.out_dir)
    os.makedirs(out, exist_ok=True)
    embeddings.save_vec(pair.source, os.path.join(out, "src.vec"), precision=opt.precision)
    embeddings.save_vec(pair.target, os.path.join(out, "tgt.vec"), precision=opt.precision)
    embeddings.write_gold_tsv(pair, os.path.join(out, "gold.tsv"))
    planted = {
        "kind": pair.kind,
        "noise_sigma": pair.noise_sigma,
        "seed": opt.seed,
        "transform": pair.planted.to_dict(),
    }
    with open(os.path.join(out, "planted.json"), "w", encoding="utf-8") as fh:
        json.dump(planted, fh, sort_keys=True, indent=2)
        fh.write("\n")
    log.info("wrote synthetic pair (n=%d, d=%d, kind=%s) to %s", opt.n, opt.dim, opt.kind, out)
    return 0


def _pipeline_config(opt: _Options) -> pipeline.PipelineConfig:
    if opt.skip_gan and opt.checkpoint != "best":
        raise ConfigError("--skip-gan conflicts with --checkpoint epoch:N")
    init_map_path = getattr(opt.args, "init_map", None)
    if init_map_path and not opt.skip_gan:
        raise ConfigError("--init-map requires --skip-gan")
    init_fwd = embeddings.load_matrix(init_map_path) if init_map_path else None
    align_config = AlignConfig(
        lambda_cyc=opt.lambda_cyc,
        beta_orth=opt.beta_orth,
        epochs=opt.epochs,
        batch_size=opt.batch_size,
        learning_rate=opt.lr,
        discriminator_vocab_limit=opt.disc_vocab,
        label_smoothing=opt.label_smoothing,
        seed=opt.seed,
        hidden_dim=opt.hidden,
        input_dropout=opt.dropout,
    )
    return pipeline.PipelineConfig(
        align=not opt.skip_gan,
        align_config=align_config,
        csls=CslsParams(k=opt.csls_k, candidate_limit=opt.induce_limit),
        cpd=CpdConfig(
            outlier_weight=opt.cpd_w,
            max_iter=opt.cpd_max_iter,
            tol=opt.cpd_tol,
            mode=opt.cpd_mode,
            point_limit=opt.cpd_points,
        ),
        max_refine_iters=opt.max_refine_iters,
        refine_mode=opt.refine,
        use_correspond=not opt.skip_correspond,
        use_transform=not opt.skip_transform,
        correspond_from_original=opt.correspond_from_original,
        checkpoint_policy=opt.checkpoint,
        init_fwd=init_fwd,
        seed=opt.seed,
        record_timings=opt.timings,
        eval_k=opt.eval_k,
    )


def _load_normalized(path: str, max_vocab: int) -> embeddings.EmbeddingSpace:
    space = embeddings.load_vec(path, max_vocab)
    if space.duplicates_dropped:
        log.warning("%s: dropped %d duplicate tokens", path, space.duplicates_dropped)
    return embeddings.normalize(space)


def _cmd_align(opt: _Options) -> int:
    config = _pipeline_config(opt)
    src = _load_normalized(opt.args.src, opt.max_vocab)
    tgt = _load_normalized(opt.args.tgt, opt.max_vocab)
    result = pipeline.run_pipeline(src, tgt, config)
    gold = embeddings.read_gold(opt.args.gold) if opt.args.gold else None
    report = pipeline.generate_output(result, opt.args.out_dir, gold)
    for rec in result.iterations:
        log.info("iteration %d: criterion %s, dict size %d", rec.index, rec.criterion, rec.dict_size)
    log.info(
        "kept iteration %d; dictionary size %d%s",
        report["chosen_iteration"],
        report["dictionary_size"],
        f"; P@1 {report['p_at_1']:.4f}" if "p_at_1" in report else "",
    )
    return 0


def _cmd_eval(opt: _Options) -> int:
    src = embeddings.load_vec(opt.args.src_mapped, opt.max_vocab)
    tgt = embeddings.load_vec(opt.args.tgt, opt.max_vocab)
    gold = embeddings.read_gold(opt.args.gold)
    params = CslsParams(k=opt.csls_k, candidate_limit=max(len(src), len(tgt)))
    index = src.index()
    present = [tok for tok in gold if tok in index]
    predictions: dict[str, list[str]] = {}
    if present:
        rows = np.asarray([index[tok] for tok in present], dtype=np.int64)
        idx, _ = metrics.retrieve_topk(
            src.matrix, tgt.matrix, None, None, params, rows, k=opt.eval_k
        )
        for tok, row in zip(present, idx):
            predictions[tok] = [tgt.vocab[int(j)] for j in row]
    p1 = metrics.evaluate_p_at_k(predictions, gold, 1)
    pk = metrics.evaluate_p_at_k(predictions, gold, opt.eval_k)
    print(f"P@1 {p1.precision:.4f}")
    print(f"P@{opt.eval_k} {pk.precision:.4f}")
    print(f"OOV {p1.oov} of {p1.evaluated}")
    return 0


def _cmd_induce(opt: _Options) -> int:
    src = embeddings.load_vec(opt.args.src, opt.max_vocab)
    tgt = embeddings.load_vec(opt.args.tgt, opt.max_vocab)
    fwd = embeddings.load_matrix(opt.args.fwd_map) if opt.args.fwd_map else None
    bwd = embeddings.load_matrix(opt.args.bwd_map) if opt.args.bwd_map else None
    params = CslsParams(k=opt.csls_k, candidate_limit=opt.induce_limit)
    dictionary = metrics.induce_dictionary(src.matrix, tgt.matrix, fwd, bwd, params)
    if len(dictionary) == 0:
        log.warning("induced dictionary is empty")
    dictionary.to_tsv(src.vocab, tgt.vocab, opt.args.out)
    log.info("wrote %d pairs to %s", len(dictionary), opt.args.out)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "align": _cmd_align,
    "eval": _cmd_eval,
    "induce": _cmd_induce,
}


def run(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](_Options(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LexalignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
