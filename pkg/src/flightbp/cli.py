"""Command-line front end.

Subcommands: ``preprocess``, ``train``, ``evaluate``, ``predict``,
``gradcheck`` (plus ``synth`` to write synthetic demo data).  All accept
``--config PATH``, ``--seed``, ``--out-dir`` and ``--verbose``; flags win
over the config file.

Exit codes: 0 success, 1 failed gradient check, 2 invalid configuration,
and the ``exit_code`` of each ``flightbp.errors`` class otherwise
(15 for file-system errors).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from flightbp import data_pipeline as dp
from flightbp import modelfile, synthetic
from flightbp.config import RunConfig, load_config, with_overrides
from flightbp.errors import ConfigError, FlightBPError, NonFiniteUpdate, SchemaMismatch
from flightbp.evaluation import decide, evaluate, render_report
from flightbp.nn_core import ActivationKind, init_network, network_forward
from flightbp.training import gradient_check, train

log = logging.getLogger("flightbp")

FS_ERROR_EXIT = 15
SPLITS = ("train", "val", "test")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return with_overrides(
        cfg,
        data=getattr(args, "data", None),
        out_dir=args.out_dir,
        seed=args.seed,
        hidden=getattr(args, "hidden", None),
        learning_rate=getattr(args, "learning_rate", None),
        epochs=getattr(args, "epochs", None),
        batch_mode=getattr(args, "batch_mode", None),
    )


def _read_bytes(path) -> bytes:
    return Path(path).read_bytes()


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def run_preprocess(cfg: RunConfig):
    """Parse, clean and split ``cfg.data`` and write the preprocess outputs."""
    if not cfg.data:
        raise ConfigError(["no input data: set \"data\" in the config or pass --data"])
    records, warnings = dp.parse_records(_read_bytes(cfg.data), cfg.features.required_columns)
    kept, report = dp.clean_records(records, cfg.features)
    parts = dp.split(kept, cfg.split)
    schema = dp.fit_schema(parts[0], cfg.features)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, part in zip(SPLITS, parts):
        _write(out / f"{name}.csv", dp.write_records_csv(r.raw for r in part))
        _write(out / f"encoded_{name}.csv", dp.dataset_to_csv(dp.build_dataset(part, schema), schema))
        manifest.extend((r.row, name) for r in part)
    _write(out / "manifest.csv", "row,split\n" + "".join(f"{r},{s}\n" for r, s in sorted(manifest)))
    _write(out / "rejections.txt", report.to_text())
    _write(out / "parse_warnings.txt", "".join(f"{w}\n" for w in warnings))
    for msg in schema.warnings:
        log.warning(msg)
    log.info(
        "kept %d of %d records (%d rejected); split %s",
        report.n_kept, report.n_input, report.n_rejected, "/".join(str(len(p)) for p in parts),
    )
    return parts


def _load_split(path: Path, features: dp.FeatureConfig):
    records, _ = dp.parse_records(_read_bytes(path), features.required_columns)
    kept, report = dp.clean_records(records, features)
    if report.n_rejected:
        log.warning("%s: %d record(s) rejected on reload", path, report.n_rejected)
    return kept


def run_train(cfg: RunConfig, force_preprocess: bool = False):
    out = Path(cfg.out_dir)
    if force_preprocess or not (out / "train.csv").exists():
        train_recs, val_recs, _ = run_preprocess(cfg)
    else:
        log.info("using preprocessed splits in %s", out)
        train_recs = _load_split(out / "train.csv", cfg.features)
        val_path = out / "val.csv"
        val_recs = _load_split(val_path, cfg.features) if val_path.exists() else []

    schema = dp.fit_schema(train_recs, cfg.features)
    train_set = dp.build_dataset(train_recs, schema)
    val_set = dp.build_dataset(val_recs, schema) if val_recs else None
    dims = [schema.encoded_width, *cfg.network.hidden, schema.target_width]
    net0 = init_network(dims, cfg.network.hidden_activation, cfg.network.output_activation, cfg.network.init_seed)

    def report_epoch(epoch, net, rec):
        if log.isEnabledFor(logging.DEBUG):
            log.debug("epoch %d train_mse %.6f%s", epoch, rec.train_mse,
                     "" if rec.val_mse is None else f" val_mse {rec.val_mse:.6f}")

    try:
        net, history = train(net0, train_set, val_set, cfg.train, on_epoch=report_epoch)
    except NonFiniteUpdate as exc:
        raise NonFiniteUpdate(f"training diverged at epoch {exc.epoch}: {exc}", exc.epoch) from None

    last = history.records[-1]
    model = modelfile.ModelFile(
        schema,
        net,
        schema.class_names,
        modelfile.provenance(cfg.digest(), cfg.train.seed, len(history), last.train_mse, last.val_mse),
    )
    out.mkdir(parents=True, exist_ok=True)
    modelfile.save(model, out / "model.json")
    _write(out / "history.txt", history.to_text())
    log.info("trained %s for %d epoch(s); final train_mse %.6f", "-".join(map(str, dims)), len(history), last.train_mse)
    return model, history


def _check_header(raw: bytes, required) -> None:
    found = dp.header_fields(raw)
    missing = [c for c in required if c not in found]
    if missing:
        raise SchemaMismatch(
            "dataset columns do not match the model schema\n"
            f"  expected: {', '.join(required)}\n"
            f"  found:    {', '.join(found) or '(none)'}\n"
            f"  missing:  {', '.join(missing)}",
            expected=required,
            found=found,
        )


def run_evaluate(model_path, dataset_path, report_path=None, out=None):
    out = out or sys.stdout
    model = modelfile.load(model_path)
    features = model.schema.feature_config
    raw = _read_bytes(dataset_path)
    _check_header(raw, features.required_columns)
    records, _ = dp.parse_records(raw, features.required_columns)
    kept, rejected = dp.clean_records(records, features)
    if rejected.n_rejected:
        log.warning("%d of %d record(s) could not be evaluated", rejected.n_rejected, rejected.n_input)
    dataset = dp.build_dataset(kept, model.schema)
    report = evaluate(model.network, dataset, model.class_names)
    out.write(render_report(report))
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        _write(Path(report_path), render_report(report, machine_readable=True))
    return report


def run_predict(model_path, input_path, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    model = modelfile.load(model_path)
    features = model.schema.feature_config
    raw = _read_bytes(input_path)
    k = model.network.output_dim
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["row", "predicted"] + [f"score_{i}" for i in range(k)])
    if not raw.strip():
        return 0, 0
    _check_header(raw, features.names)
    records, _ = dp.parse_records(raw, features.names)
    done = skipped = 0
    for rec in records:
        prepared = dp.prepare_unlabeled(rec, features)
        if isinstance(prepared, str):
            err.write(f"row {rec.row} skipped: {prepared}\n")
            skipped += 1
            continue
        scores = network_forward(model.network, dp.encode_features(prepared, model.schema)).output
        writer.writerow([rec.row, model.class_names[decide(scores)]] + [repr(float(s)) for s in scores])
        done += 1
    err.write(f"predicted {done} row(s), skipped {skipped}\n")
    return done, skipped


def parse_dims(text: str) -> list[int]:
    try:
        return [int(p) for p in text.replace(",", "-").split("-") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like 4-8-3, got {text!r}") from None


def run_gradcheck(dims, seed=0, step=1e-5, tolerance=1e-5, output_activation="tanh", out=None):
    out = out or sys.stdout
    net = init_network(dims, ActivationKind.TANH, output_activation, seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=net.input_dim)
    t = rng.uniform(-1.0, 1.0, size=net.output_dim)
    report = gradient_check(net, (x, t), step, tolerance)
    out.write(f"dims: {'-'.join(map(str, net.dims))}\n")
    out.write(f"parameters checked: {report.n_params}\n")
    out.write(f"max relative error: {report.max_relative_error:.3e}\n")
    out.write(f"tolerance: {tolerance:.3e}\n")
    out.write(f"result: {'PASS' if report.passed else 'FAIL'}\n")
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for splitting, initialisation and shuffling")
    common.add_argument("--out-dir", metavar="DIR", help="directory for outputs (default: run)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="flightbp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="clean, split and encode an accident CSV")
    p.add_argument("--data", metavar="CSV")

    p = sub.add_parser("train", parents=[common], help="train a network and write model.json + history.txt")
    p.add_argument("--data", metavar="CSV", help="raw CSV; re-runs preprocessing")
    p.add_argument("--hidden", type=parse_dims, metavar="W[-W...]", help="hidden layer widths, e.g. 8 or 16-8")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-mode", choices=["per_sample", "full_batch"])

    p = sub.add_parser("evaluate", parents=[common], help="accuracy and confusion matrix on a dataset")
    p.add_argument("--model", metavar="PATH", help="default: OUT_DIR/model.json")
    p.add_argument("--dataset", metavar="CSV", help="default: OUT_DIR/test.csv")
    p.add_argument("--report", metavar="PATH", help="machine-readable report (default: OUT_DIR/report.txt)")

    p = sub.add_parser("predict", parents=[common], help="classify each row of a CSV")
    p.add_argument("--model", metavar="PATH", help="default: OUT_DIR/model.json")
    p.add_argument("--input", metavar="CSV", required=True)
    p.add_argument("--output", metavar="PATH", help="default: stdout")

    p = sub.add_parser("gradcheck", parents=[common], help="compare backprop with finite differences")
    p.add_argument("--dims", type=parse_dims, default=[4, 8, 3], metavar="N-H-...-K")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--output-activation", choices=[k.value for k in ActivationKind], default="tanh")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic accident CSV")
    p.add_argument("--kind", choices=["accidents", "gaussians"], default="accidents")
    p.add_argument("--n", type=int)
    p.add_argument("--output", metavar="PATH", help="default: stdout")
    return parser


def _dispatch(args) -> int:
    if args.command == "gradcheck":
        seed = 0 if args.seed is None else args.seed
        report = run_gradcheck(args.dims, seed, args.step, args.tolerance, args.output_activation)
        return 0 if report.passed else 1
    if args.command == "synth":
        if args.kind == "accidents":
            text = synthetic.accident_sample(args.n or 50, 2024 if args.seed is None else args.seed)
        else:
            text = synthetic.gaussian_accidents(args.n or 400, 0 if args.seed is None else args.seed)
        if args.output:
            _write(Path(args.output), text)
        else:
            sys.stdout.write(text)
        return 0

    cfg = _resolve_config(args)
    out = Path(cfg.out_dir)
    if args.command == "preprocess":
        run_preprocess(cfg)
    elif args.command == "train":
        run_train(cfg, force_preprocess=args.data is not None)
    elif args.command == "evaluate":
        run_evaluate(
            args.model or out / "model.json",
            args.dataset or out / "test.csv",
            args.report or out / "report.txt",
        )
    elif args.command == "predict":
        model = args.model or out / "model.json"
        if args.output:
            with open(args.output, "w", encoding="utf-8", newline="") as fh:
                run_predict(model, args.input, out=fh)
        else:
            run_predict(model, args.input)
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", force=True)
    try:
        return _dispatch(args)
    except FlightBPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return FS_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())
