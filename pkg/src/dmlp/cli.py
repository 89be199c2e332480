"""Command-line entry point: train, eval, predict, stream, synth, inspect.

stdout carries machine-readable output only (JSON lines or tab-separated
tables); diagnostics go to stderr. Exit codes: 0 success, 1 usage error,
2 data error, 3 model error, 4 budget error, 5 runtime error.
"""

import argparse
import json
import socket
import sys
from pathlib import Path

from . import __version__
from .data import (
    SplitSpec,
    default_synth_split,
    load_dataset,
    manifest_report,
    synth_generate,
    write_frames,
)
from .errors import (
    BenchmarkError,
    BudgetError,
    ConfigError,
    DataError,
    DmlpError,
    ModelFormatError,
    NumericError,
    ShapeError,
    StorageError,
    StreamError,
)
from .model_io import FORMAT_VERSION, SIZE_BUDGET, inspect, load, save
from .runtime import DebounceConfig, evaluate, serve_connections, stream_serve
from .training import TrainConfig, predict_features, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3
EXIT_BUDGET = 4
EXIT_RUNTIME = 5


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_json(obj) -> None:
    print(json.dumps(obj, separators=(",", ":")))


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_train(args) -> int:
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        momentum=args.momentum,
        dropout_rate=args.dropout,
        seed=args.seed,
        shuffle=not args.no_shuffle,
    )
    split = SplitSpec.from_file(args.split)
    train_frames, _eval_frames, manifest = load_dataset(args.data, split)
    _diag(manifest_report(manifest))

    def on_epoch(epoch, loss, accuracy, seconds):
        _print_json({"epoch": epoch, "loss": loss, "accuracy": accuracy, "seconds": seconds})

    model, history = train(train_frames, config, on_epoch=on_epoch)
    written = save(model, args.out)
    _print_json(
        {
            "model": str(args.out),
            "parameters": model.topology.parameter_count,
            "bytes": written,
            "budget": SIZE_BUDGET,
            "headroom": SIZE_BUDGET - written,
        }
    )
    if args.figures:
        from .figures import save_history_figure

        out_dir = Path(args.figures)
        out_dir.mkdir(parents=True, exist_ok=True)
        _diag(f"figure: {save_history_figure(history, out_dir / 'training_history.png')}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load(args.model)
    split = SplitSpec.from_file(args.split)
    _train_frames, eval_frames, manifest = load_dataset(args.data, split)
    report = evaluate(model, eval_frames)
    if args.format == "table":
        print(report.to_table())
        _diag(manifest_report(manifest))
    else:
        _print_json({"report": report.to_dict(), "manifest": manifest.to_dict()})
    if args.figures:
        from .figures import save_eval_figure

        out_dir = Path(args.figures)
        out_dir.mkdir(parents=True, exist_ok=True)
        _diag(f"figure: {save_eval_figure(report, out_dir / 'accuracy_by_scenario.png')}")
    return EXIT_OK


def _read_one_record(path: str | None) -> dict:
    if path is None:
        text = sys.stdin.readline()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.readline()
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
    text = text.strip()
    if not text:
        raise DataError("no input record")
    try:
        obj = json.loads(text)
    except ValueError as exc:
        raise DataError(f"invalid record: {exc}") from exc
    if not isinstance(obj, dict):
        raise DataError("record must be a JSON object")
    return obj


def cmd_predict(args) -> int:
    from .data import landmarks_from_json

    model = load(args.model)
    record = _read_one_record(args.input)
    if record.get("landmarks") is None:
        raise DataError("record has no landmarks; nothing to classify")
    points = landmarks_from_json(record["landmarks"])
    label, p_sleepy = predict_features(model, points)
    _print_json({"label": label.value, "p_sleepy": p_sleepy})
    return EXIT_OK


def cmd_stream(args) -> int:
    model = load(args.model)
    config = DebounceConfig(window=args.window, threshold=args.threshold, cutoff=args.cutoff)
    if args.listen is None:
        count = stream_serve(model, sys.stdin, sys.stdout, config)
        _diag(f"served {count} records")
        return EXIT_OK
    try:
        listener = socket.create_server((args.listen_host, args.listen))
    except OSError as exc:
        raise StreamError(f"cannot listen on {args.listen_host}:{args.listen}: {exc}") from exc
    _diag(f"listening on {args.listen_host}:{args.listen}")
    try:
        serve_connections(model, listener, config)
    except KeyboardInterrupt:
        _diag("interrupted; shutting down")
    finally:
        listener.close()
    return EXIT_OK


def cmd_synth(args) -> int:
    frames = synth_generate(args.count, args.sleepy_fraction, args.noise, args.seed)
    count = write_frames(frames, args.out)
    summary = {"path": str(args.out), "frames": count, "seed": args.seed}
    if args.split_out:
        split = default_synth_split()
        with open(args.split_out, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(split.to_obj(), fh, separators=(",", ":"))
            fh.write("\n")
        summary["split"] = str(args.split_out)
    _print_json(summary)
    return EXIT_OK


def cmd_inspect(args) -> int:
    print(inspect(args.model))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="dmlp",
        description="Landmark-based drowsiness classifier: train, evaluate, and stream.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"dmlp {__version__} (model format v{FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train", help="train a model and save it")
    p_train.add_argument("--data", required=True, help="frame file or directory of .jsonl files")
    p_train.add_argument("--split", required=True, help="JSON split file with train/eval subjects")
    p_train.add_argument("--out", required=True, help="output model path")
    p_train.add_argument("--epochs", type=int, default=50, help="training epochs (default %(default)s)")
    p_train.add_argument("--lr", type=float, default=0.01, help="learning rate (default %(default)s)")
    p_train.add_argument("--batch", type=int, default=64, help="mini-batch size (default %(default)s)")
    p_train.add_argument("--momentum", type=float, default=0.9, help="momentum (default %(default)s)")
    p_train.add_argument("--dropout", type=float, default=0.2, help="dropout rate (default %(default)s)")
    p_train.add_argument("--seed", type=int, default=0, help="root seed (default %(default)s)")
    p_train.add_argument("--no-shuffle", action="store_true", help="disable epoch shuffling")
    p_train.add_argument("--figures", help="directory for training-history figure")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a model on the eval split")
    p_eval.add_argument("--model", required=True, help="model file")
    p_eval.add_argument("--data", required=True, help="frame file or directory")
    p_eval.add_argument("--split", required=True, help="JSON split file")
    p_eval.add_argument(
        "--format", choices=("table", "json"), default="table",
        help="report format (default %(default)s)",
    )
    p_eval.add_argument("--figures", help="directory for accuracy-by-scenario figure")
    p_eval.set_defaults(func=cmd_eval)

    p_predict = sub.add_parser("predict", help="classify one frame record")
    p_predict.add_argument("--model", required=True, help="model file")
    p_predict.add_argument("--input", help="record file (default: stdin)")
    p_predict.set_defaults(func=cmd_predict)

    p_stream = sub.add_parser("stream", help="streaming classification daemon")
    p_stream.add_argument("--model", required=True, help="model file")
    p_stream.add_argument("--listen", type=int, help="serve a TCP listener on this port instead of stdin")
    p_stream.add_argument("--listen-host", default="127.0.0.1", help="listener bind host (default %(default)s)")
    p_stream.add_argument("--window", type=int, default=10, help="debounce window (default %(default)s)")
    p_stream.add_argument(
        "--threshold", type=int, default=8,
        help="sleepy frames within the window needed to alert (default %(default)s)",
    )
    p_stream.add_argument(
        "--cutoff", type=float, default=0.5,
        help="sleepy probability cutoff (default %(default)s)",
    )
    p_stream.set_defaults(func=cmd_stream)

    p_synth = sub.add_parser("synth", help="generate a synthetic landmark dataset")
    p_synth.add_argument("--out", required=True, help="output frame file")
    p_synth.add_argument("--count", type=int, default=1000, help="frames to generate (default %(default)s)")
    p_synth.add_argument(
        "--sleepy-fraction", type=float, default=0.5,
        help="fraction of sleepy frames (default %(default)s)",
    )
    p_synth.add_argument(
        "--noise", type=float, default=1.5,
        help="Gaussian jitter in pixels (default %(default)s)",
    )
    p_synth.add_argument("--seed", type=int, default=7, help="generator seed (default %(default)s)")
    p_synth.add_argument("--split-out", help="also write the default subject split here")
    p_synth.set_defaults(func=cmd_synth)

    p_inspect = sub.add_parser("inspect", help="summarize a model file")
    p_inspect.add_argument("model", help="model file")
    p_inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _diag(f"error: {exc}")
        return EXIT_USAGE
    except BudgetError as exc:
        _diag(f"error: {exc}")
        return EXIT_BUDGET
    except (ModelFormatError, StorageError) as exc:
        _diag(f"error: {exc}")
        return EXIT_MODEL
    except (DataError, ShapeError, NumericError) as exc:
        _diag(f"error: {exc}")
        return EXIT_DATA
    except (StreamError, BenchmarkError) as exc:
        _diag(f"error: {exc}")
        return EXIT_RUNTIME
    except DmlpError as exc:
        _diag(f"error: {exc}")
        return EXIT_RUNTIME
