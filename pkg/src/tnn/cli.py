"""Command-line surface: train, eval, extrapolate, bench, dump-toeplitz,
selftest.

This module imports only the standard library at load time; numpy and the
library proper are imported inside command handlers. That ordering lets
main() translate TNN_THREADS (and --deterministic, which forces a single
thread) into the BLAS/OpenMP environment caps before numpy first loads,
which is the only moment those caps can take effect.

Exit codes: 0 success, 1 property/selftest/verification failure, 2 usage
error (bad flags, bad config, bad files), 3 numeric abort (non-finite loss
or overflow). All emitted files are UTF-8 with LF line endings; CSV and
metrics schemas are fixed and documented in the README.
"""

import argparse
import json
import os
import sys
import time

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _configure_threads(argv) -> None:
    """Apply TNN_THREADS before numpy import; --deterministic pins 1."""
    value = os.environ.get("TNN_THREADS", "").strip()
    if "--deterministic" in argv:
        value = "1"
    if not value:
        return
    if not value.isdigit() or int(value) < 1:
        raise SystemExit(f"tnn: TNN_THREADS must be a positive integer, got {value!r}")
    for var in _THREAD_VARS:
        os.environ[var] = value


def _write_lf(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_run_config(args):
    from tnn.config import RunConfig, apply_overrides, load_config

    cfg = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(
        cfg,
        seed=args.seed,
        precision=args.precision,
        deterministic=True if args.deterministic else None,
        out_dir=args.out,
        data_path=getattr(args, "data", None),
        steps=getattr(args, "steps", None),
    )


def _dtype_for(precision: str):
    import numpy as np

    return np.float32 if precision == "f32" else np.float64


def _get_corpus(data_path: str, vocab_mode: str, val_fraction: float, out_dir: str):
    from tnn.data import ingest_corpus, write_synthetic_corpus

    if not data_path:
        data_path = os.path.join(out_dir, "corpus.txt")
        if not os.path.exists(data_path):
            write_synthetic_corpus(data_path)
    return ingest_corpus(data_path, vocab_mode, val_fraction)


def cmd_train(args) -> int:
    import numpy as np

    from tnn.checkpoint import save_checkpoint
    from tnn.config import model_config_dict, serialize_config
    from tnn.data import sample_windows, unigram_baseline
    from tnn.model import ModelConfig, TnnModel, evaluate_stream
    from tnn.optim import AdamState, OptimConfig, train_step

    cfg = _load_run_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    corpus = _get_corpus(cfg.data_path, cfg.vocab_mode, cfg.val_fraction, cfg.out_dir)
    _write_lf(os.path.join(cfg.out_dir, "config.txt"), serialize_config(cfg))

    model = TnnModel(
        ModelConfig(**model_config_dict(cfg, corpus.vocab_size)),
        seed=cfg.seed,
        dtype=_dtype_for(cfg.precision),
    )
    opt_cfg = OptimConfig(
        peak_lr=cfg.peak_lr, warmup_steps=cfg.warmup_steps, beta1=cfg.beta1,
        beta2=cfg.beta2, eps=cfg.adam_eps, weight_decay=cfg.weight_decay,
        clip_norm=cfg.clip_norm,
    )
    state = AdamState(model.params)
    batch_rng = np.random.default_rng(cfg.seed + 1)

    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.tnn")
    metrics_path = os.path.join(cfg.out_dir, "metrics.ndjson")
    baseline = unigram_baseline(corpus.train, corpus.val, corpus.vocab_size)
    started = time.perf_counter()
    last_val = None
    last_train = None

    def clock() -> float:
        return 0.0 if cfg.deterministic else time.perf_counter() - started

    def validate():
        report = evaluate_stream(model, corpus.val, cfg.seq_len, cfg.val_batches)
        return report["loss"]

    save_checkpoint(model, ckpt_path, extras={"step": 0})
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as metrics:
        try:
            for step in range(1, cfg.steps + 1):
                batch = sample_windows(corpus.train, cfg.seq_len, cfg.batch_size, batch_rng)
                info = train_step(model, state, batch, opt_cfg)
                last_train = info["loss"]
                record = {
                    "step": step,
                    "loss": info["loss"],
                    "lr": info["lr"],
                    "grad_norm": info["grad_norm"],
                    "wall_time": clock(),
                }
                at_val = cfg.val_interval > 0 and step % cfg.val_interval == 0
                if at_val or step == cfg.steps:
                    last_val = validate()
                    record["val_loss"] = last_val
                    save_checkpoint(model, ckpt_path, extras={"step": step, "val_loss": last_val})
                metrics.write(json.dumps(record, sort_keys=True) + "\n")
        except FloatingPointError as exc:
            print(
                f"tnn train: numeric abort at step {step}: {exc}; "
                f"last-good checkpoint kept at {ckpt_path}",
                file=sys.stderr,
            )
            return EXIT_NUMERIC

    summary = {
        "steps": cfg.steps,
        "train_loss": last_train,
        "val_loss": last_val,
        "unigram_baseline": baseline,
        "vocab_size": corpus.vocab_size,
        "param_count": model.param_count(),
        "checkpoint": ckpt_path,
        "metrics": metrics_path,
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _load_model(path: str):
    from tnn.checkpoint import load_checkpoint

    model, extras = load_checkpoint(path)
    return model, extras


def cmd_eval(args) -> int:
    from tnn.errors import ConfigError
    from tnn.model import evaluate_stream

    model, _ = _load_model(args.checkpoint)
    corpus = _get_corpus(args.data, args.vocab_mode, args.val_fraction, ".")
    if corpus.vocab_size != model.config.vocab_size:
        raise ConfigError(
            f"corpus vocab {corpus.vocab_size} != model vocab {model.config.vocab_size}"
        )
    report = evaluate_stream(model, corpus.val, args.seq_len, args.max_windows)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_extrapolate(args) -> int:
    from tnn.errors import ConfigError, DimensionError
    from tnn.model import evaluate_stream

    lengths = []
    for piece in args.lengths.split(","):
        piece = piece.strip()
        if piece:
            lengths.append(int(piece))
    if not lengths:
        raise ConfigError("no lengths given")
    for length in lengths:
        if length < 2:
            raise DimensionError(f"length must be >= 2, got {length}")
    model, _ = _load_model(args.checkpoint)
    if not model.config.causal:
        raise ConfigError("extrapolation protocol needs a causal checkpoint")
    corpus = _get_corpus(args.data, args.vocab_mode, args.val_fraction, ".")
    if corpus.vocab_size != model.config.vocab_size:
        raise ConfigError(
            f"corpus vocab {corpus.vocab_size} != model vocab {model.config.vocab_size}"
        )
    lines = ["length,loss,perplexity,tokens_evaluated"]
    for length in lengths:
        report = evaluate_stream(model, corpus.val, length, args.max_windows)
        lines.append(
            f"{length},{report['loss']!r},{report['perplexity']!r},{report['tokens_evaluated']}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_lf(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    from tnn.bench import METHODS, doubling_ratios, run_sweep, write_csv

    methods = [m.strip() for m in args.methods.split(",") if m.strip()] or list(METHODS)
    records = run_sweep(methods, args.min_n, args.max_n, args.d, args.trials, seed=args.seed or 0)
    if args.out:
        write_csv(records, args.out)
    else:
        sys.stdout.write("method,n,d,trials,median_seconds,checksum\n")
        for r in records:
            sys.stdout.write(
                f"{r.method},{r.n},{r.d},{r.trials},{r.median_seconds!r},{r.checksum}\n"
            )
    for method in methods:
        ratios = doubling_ratios(records, method)
        if ratios:
            pretty = ", ".join(f"{x:.2f}" for x in ratios)
            print(f"# {method} doubling ratios: {pretty}", file=sys.stderr)
    return EXIT_OK


def cmd_dump_toeplitz(args) -> int:
    import numpy as np

    from tnn.errors import ConfigError
    from tnn.toeplitz import RelPosCoefficients, toeplitz_dense

    model, _ = _load_model(args.checkpoint)
    if not 0 <= args.layer < len(model.tnos):
        raise ConfigError(
            f"layer {args.layer} out of range for a {len(model.tnos)}-block model"
        )
    op = model.tnos[args.layer]
    coeffs = op.effective_coeffs(args.n)
    n, d = coeffs.length, coeffs.channels

    coeff_lines = ["offset,channel,value"]
    for k in range(-(n - 1), n):
        row = coeffs.values[coeffs.offset_row(k)]
        for c in range(d):
            coeff_lines.append(f"{k},{c},{row[c]!r}")
    _write_lf(args.out + "_coeffs.csv", "\n".join(coeff_lines) + "\n")

    mean_vals = np.mean(coeffs.values, axis=1, keepdims=True)
    dense = toeplitz_dense(RelPosCoefficients(mean_vals))[:, :, 0]
    matrix_lines = [",".join(repr(float(v)) for v in row) for row in dense]
    _write_lf(args.out + "_matrix.csv", "\n".join(matrix_lines) + "\n")
    print(
        json.dumps(
            {
                "coeffs": args.out + "_coeffs.csv",
                "matrix": args.out + "_matrix.csv",
                "n": n,
                "channels": d,
                "layer": args.layer,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_selftest(args) -> int:
    from tnn.selftest import format_results, run_selftest

    results = run_selftest(fast=args.fast, inject_fault=args.inject_fault)
    print(format_results(results))
    return EXIT_OK if all(r.ok for r in results) else EXIT_PROPERTY_FAILURE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tnn",
        description="Toeplitz sequence model: training, evaluation, and kernel tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument(
            "--precision", choices=("f32", "f64"), default=None, help="parameter dtype"
        )
        p.add_argument(
            "--deterministic", action="store_true",
            help="single thread, wall_time pinned to 0.0 in logs",
        )
        p.add_argument("--out", default=None, help=out_help)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--data", default=None, help="corpus path (default: synthetic corpus)")
    p.add_argument("--steps", type=int, default=None, help="optimizer steps override")
    common(p, "output directory (config key out_dir)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="mean next-token loss on the validation stream")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default="", help="corpus path (default: synthetic corpus)")
    p.add_argument("--vocab-mode", choices=("byte", "char"), default="byte")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seq-len", type=int, required=True)
    p.add_argument("--max-windows", type=int, default=0, help="0 = every window")
    common(p, "unused")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("extrapolate", help="loss at several lengths, CSV output")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default="", help="corpus path (default: synthetic corpus)")
    p.add_argument("--vocab-mode", choices=("byte", "char"), default="byte")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--lengths", default="128,256,512,1024", help="comma-separated")
    p.add_argument("--max-windows", type=int, default=0, help="0 = every window")
    common(p, "CSV path (default: stdout)")
    p.set_defaults(handler=cmd_extrapolate)

    p = sub.add_parser("bench", help="verified kernel timings, CSV output")
    p.add_argument("--methods", default="naive,fft_paper2n,fft_pow2")
    p.add_argument("--min-n", type=int, default=512)
    p.add_argument("--max-n", type=int, default=4096)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--trials", type=int, default=5)
    common(p, "CSV path (default: stdout)")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("dump-toeplitz", help="effective Toeplitz matrix of one block")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--n", type=int, default=64)
    common(p, "output prefix for _coeffs.csv and _matrix.csv")
    p.set_defaults(handler=cmd_dump_toeplitz)

    p = sub.add_parser("selftest", help="run the named property table")
    p.add_argument("--fast", action="store_true", help="smaller instance counts")
    p.add_argument(
        "--inject-fault", action="store_true",
        help="diagnostic: corrupt the paper_2n fft path to prove detection",
    )
    common(p, "unused")
    p.set_defaults(handler=cmd_selftest)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        _configure_threads(argv)
    except SystemExit as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    from tnn.errors import CheckpointError, ConfigError, DimensionError, NumericError

    try:
        return args.handler(args)
    except NumericError as exc:
        print(f"tnn {args.command}: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DimensionError, CheckpointError, OSError) as exc:
        print(f"tnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # failed verification and similar property violations
        print(f"tnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_PROPERTY_FAILURE


if __name__ == "__main__":
    sys.exit(main())
