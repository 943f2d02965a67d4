"""Operator command line: preprocess captures, train, evaluate, predict,
and inspect the binary artifacts.

Configuration is a flat key=value file; command-line flags override file
values, and every command echoes its effective configuration at startup
in the same key=value form, so a run can be reproduced by feeding the
echo back in as a config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import get_type_hints

from .dataset import (DATASET_MAGIC, Dataset, load_dataset, parse_dataset,
                      save_dataset)
from .errors import (BadMagic, CgnnError, ConfigError, DimsMismatch,
                     EmptyDataset, EmptySplit, NoLabels, NoSessions)
from .graph import (ChainedGraph, build_chain_graph, split_dataset,
                    truncate_graph)
from .ioutil import atomic_write_bytes
from .metrics import classification_report, format_report, write_heatmap_csv
from .model import (CHECKPOINT_MAGIC, ModelDims, load_checkpoint,
                    parse_checkpoint, save_checkpoint)
from .pcap import PcapRecord, parse_pcap
from .preprocess import FiveTuple, clean_packet, split_sessions
from .train import TrainConfig, fit, predict

CHECKPOINT_NAME = "best.cgm1"


@dataclass(frozen=True)
class RunConfig:
    """Every knob of the pipeline, with the recommended defaults."""

    # model shape
    p: int = 1500
    d1: int = 516
    d2: int = 256
    layers: int = 2
    k1: int = 1
    k2: int = 1
    pooling: str = "avg"
    standardize: bool = False
    # preprocessing
    fraction: float = 1.0
    drop_dns: bool = False
    # optimization
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 400
    patience: int = 20
    seed: int = 0
    split_seed: int = 0

    def to_dims(self, p: int, m: int) -> ModelDims:
        return ModelDims(p=p, d1=self.d1, d2=self.d2, m=m,
                         layers=self.layers, k1=self.k1, k2=self.k2,
                         pooling=self.pooling, standardize=self.standardize)

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                           eps=self.eps, batch_size=self.batch_size,
                           max_epochs=self.max_epochs, patience=self.patience,
                           seed=self.seed)

    def validate(self) -> None:
        self.to_dims(self.p, 2).validate()
        self.to_train_config().validate()
        if not 0 < self.fraction <= 1:
            raise ConfigError(f"fraction must lie in (0, 1], "
                              f"got {self.fraction}")
        if self.seed < 0 or self.split_seed < 0:
            raise ConfigError("seeds cannot be negative")


_FIELD_TYPES = get_type_hints(RunConfig)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key: str, text: str):
    kind = _FIELD_TYPES[key]
    text = text.strip()
    if kind is bool:
        lowered = text.lower()
        if lowered in ("true", "yes", "on", "1"):
            return True
        if lowered in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key} expects true or false, got {text!r}")
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key} expects {kind.__name__}, got {text!r}")


def format_config(cfg: RunConfig) -> str:
    """The effective configuration as a re-parseable key=value block."""
    lines = ["# configuration"]
    for f in dataclasses.fields(cfg):
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    lines.append("# end configuration")
    return "\n".join(lines)


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse key=value lines over a base config. Comments (#) and blank
    lines are ignored; unknown keys are rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, "
                              f"got {raw.strip()!r}")
        key, text_value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, text_value)
    return dataclasses.replace(base or RunConfig(), **values)


def parse_config_file(path: Path | str,
                      base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


@dataclass
class IngestStats:
    """Counts of what preprocessing kept and dropped."""

    files: int = 0
    sessions: int = 0
    vertices: int = 0
    skipped: int = 0  # frames that could not join any session
    discarded_empty: int = 0  # packets with no transport payload
    dropped_sessions: int = 0  # sessions whose packets were all discarded
    dropped_dns: int = 0

    def add(self, other: "IngestStats") -> None:
        for f in dataclasses.fields(self):
            setattr(self, f.name,
                    getattr(self, f.name) + getattr(other, f.name))

    def describe(self) -> str:
        return (f"{self.sessions} sessions, {self.vertices} vertices, "
                f"skipped {self.skipped} frames, discarded "
                f"{self.discarded_empty} empty packets, dropped "
                f"{self.dropped_sessions} empty sessions, dropped "
                f"{self.dropped_dns} DNS packets")


def graphs_from_records(records: list[PcapRecord], label: int, p: int,
                        fraction: float = 1.0, drop_dns: bool = False,
                        ) -> tuple[list[ChainedGraph], list[FiveTuple],
                                   IngestStats]:
    """Full ingest of parsed records: sessions, cleaning, graphs."""
    split = split_sessions(records, drop_dns=drop_dns)
    stats = IngestStats(skipped=split.skipped, dropped_dns=split.dropped_dns)
    graphs: list[ChainedGraph] = []
    keys: list[FiveTuple] = []
    for key, session in split.sessions.items():
        cleaned = []
        for record in session:
            packet = clean_packet(record, p)
            if packet is None:
                stats.discarded_empty += 1
            else:
                cleaned.append(packet)
        if not cleaned:
            stats.dropped_sessions += 1
            continue
        graph = truncate_graph(build_chain_graph(cleaned, label), fraction)
        graphs.append(graph)
        keys.append(key)
        stats.sessions += 1
        stats.vertices += graph.n
    return graphs, keys, stats


def _resolve_threads(args) -> int:
    if args.threads is not None:
        threads = args.threads
    else:
        try:
            threads = int(os.environ.get("CGNN_THREADS", "1"))
        except ValueError:
            raise ConfigError("CGNN_THREADS must be an integer")
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}")
    return threads


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        cfg = parse_config_file(args.config, base=cfg)
    overrides = {}
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _ingest_file(path: Path, label: int, cfg: RunConfig):
    try:
        pcap = parse_pcap(path.read_bytes())
        graphs, _, stats = graphs_from_records(
            pcap.records, label, cfg.p, cfg.fraction, cfg.drop_dns)
    except CgnnError as exc:
        raise type(exc)(f"{path}: {exc}")
    stats.files = 1
    return graphs, stats, pcap.truncated, path


def cmd_preprocess(args) -> int:
    cfg = _resolve_config(args)
    print(format_config(cfg))
    threads = _resolve_threads(args)
    root = Path(args.root)
    if not root.is_dir():
        raise NoLabels(f"{root} is not a directory")
    labels = sorted(d.name for d in root.iterdir() if d.is_dir())
    if not labels:
        raise NoLabels(f"no label directories under {root}")

    tasks = []
    for label_id, name in enumerate(labels):
        for path in sorted((root / name).glob("*.pcap")):
            tasks.append((path, label_id))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda t: _ingest_file(t[0], t[1], cfg), tasks))
    else:
        results = [_ingest_file(path, label_id, cfg)
                   for path, label_id in tasks]

    all_graphs: list[ChainedGraph] = []
    per_label = {label_id: IngestStats() for label_id in range(len(labels))}
    for (graphs, stats, truncated, path), (_, label_id) in zip(results,
                                                               tasks):
        if truncated:
            print(f"warning: {path} ends mid-record; kept what parsed",
                  file=sys.stderr)
        all_graphs.extend(graphs)
        per_label[label_id].add(stats)

    total = IngestStats()
    for label_id, name in enumerate(labels):
        stats = per_label[label_id]
        print(f"label {name} (id {label_id}): {stats.files} files, "
              f"{stats.describe()}")
        if stats.sessions == 0:
            print(f"warning: label {name} produced no sessions",
                  file=sys.stderr)
        total.add(stats)
    print(f"total: {total.files} files, {total.describe()}")

    dataset = Dataset(graphs=all_graphs, label_names=labels, p=cfg.p)
    save_dataset(dataset, args.out)
    print(f"wrote {len(all_graphs)} graphs to {args.out}")
    return 0


def _check_class_coverage(train: list[ChainedGraph],
                          label_names: list[str]) -> None:
    present = {g.label for g in train}
    for label_id, name in enumerate(label_names):
        if label_id not in present:
            raise EmptySplit(f"label {name} has no graphs in the "
                             f"training split")


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    print(format_config(cfg))
    dataset = load_dataset(args.data)
    if not dataset.graphs:
        raise EmptyDataset(f"{args.data} holds no graphs")
    train_set, valid_set, test_set = split_dataset(dataset.graphs,
                                                   seed=cfg.split_seed)
    _check_class_coverage(train_set, dataset.label_names)
    print(f"split: {len(train_set)} train, {len(valid_set)} validation, "
          f"{len(test_set)} test")

    dims = cfg.to_dims(dataset.p, dataset.num_classes)
    model, report = fit(train_set, valid_set, dims, cfg.to_train_config(),
                        log=print)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / CHECKPOINT_NAME
    save_checkpoint(model, dataset.label_names, checkpoint_path)
    atomic_write_bytes(out_dir / "config.txt",
                       (format_config(cfg) + "\n").encode("utf-8"))

    history = ["epoch,train_loss,valid_loss,valid_accuracy"]
    for i in range(report.epochs_run):
        history.append(f"{i + 1},{report.train_losses[i]:.6f},"
                       f"{report.val_losses[i]:.6f},"
                       f"{report.val_accuracies[i]:.6f}")
    atomic_write_bytes(out_dir / "history.csv",
                       ("\n".join(history) + "\n").encode("utf-8"))

    if report.best_epoch:
        print(f"best epoch {report.best_epoch}: validation loss "
              f"{report.best_val_loss:.6f}, validation accuracy "
              f"{report.val_accuracies[report.best_epoch - 1]:.4f}")
    else:
        print("no epochs ran; saved the initialized model")
    print(f"wrote {checkpoint_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    print(format_config(cfg))
    dataset = load_dataset(args.data)
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.model
    if model.dims.m != dataset.num_classes:
        raise DimsMismatch(f"checkpoint has {model.dims.m} classes, "
                           f"dataset has {dataset.num_classes}")
    if model.dims.p != dataset.p:
        raise DimsMismatch(f"checkpoint expects feature length "
                           f"{model.dims.p}, dataset has {dataset.p}")
    if checkpoint.label_names != dataset.label_names:
        print("warning: checkpoint and dataset label names differ",
              file=sys.stderr)

    if args.split == "test":
        _, _, graphs = split_dataset(dataset.graphs, seed=cfg.split_seed)
        if not graphs:
            raise EmptySplit("test split is empty; too few graphs per label")
    else:
        graphs = dataset.graphs
        if not graphs:
            raise EmptyDataset(f"{args.data} holds no graphs")

    predictions = predict(model, graphs)
    true = [g.label for g in graphs]
    pred = [p.label for p in predictions]
    report = classification_report(true, pred, dataset.label_names,
                                   weighted=args.weighted)
    print(format_report(report))

    heatmap = Path(args.heatmap) if args.heatmap else \
        Path(args.checkpoint).parent / "confusion.csv"
    write_heatmap_csv(report, heatmap)
    print(f"wrote {heatmap}")
    return 0


def cmd_predict(args) -> int:
    cfg = _resolve_config(args)
    print(format_config(cfg))
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.model
    pcap_path = Path(args.pcap)
    pcap = parse_pcap(pcap_path.read_bytes())
    if pcap.truncated:
        print(f"warning: {pcap_path} ends mid-record; kept what parsed",
              file=sys.stderr)
    graphs, keys, stats = graphs_from_records(
        pcap.records, 0, model.dims.p, cfg.fraction, cfg.drop_dns)
    if not graphs:
        raise NoSessions(f"no sessions survived cleaning in {pcap_path} "
                         f"({stats.describe()})")

    predictions = predict(model, graphs)
    rows = []
    for key, graph, pred in zip(keys, graphs, predictions):
        name = checkpoint.label_names[pred.label]
        confidence = pred.probs[pred.label]
        print(f"{key} [{graph.n} packets] -> {name} ({confidence:.4f})")
        probs = ",".join(f"{v:.6f}" for v in pred.probs)
        rows.append(f"{pred.graph_id},{name},{probs}")
    if args.csv:
        header = "graph_id,label," + ",".join(checkpoint.label_names)
        atomic_write_bytes(args.csv,
                           ("\n".join([header] + rows) + "\n").encode())
        print(f"wrote {args.csv}")
    return 0


def cmd_inspect(args) -> int:
    data = Path(args.file).read_bytes()
    magic = data[:4]
    if magic == DATASET_MAGIC:
        dataset = parse_dataset(data)
        print(f"dataset: feature length {dataset.p}, "
              f"{dataset.num_classes} classes, {len(dataset.graphs)} graphs")
        counts = Counter(g.label for g in dataset.graphs)
        for label_id, name in enumerate(dataset.label_names):
            print(f"label {name} (id {label_id}): "
                  f"{counts.get(label_id, 0)} graphs")
        histogram = Counter(g.n for g in dataset.graphs)
        print("vertex-count histogram:")
        for n in sorted(histogram):
            print(f"  {n}: {histogram[n]}")
        return 0
    if magic == CHECKPOINT_MAGIC:
        checkpoint = parse_checkpoint(data)
        dims = checkpoint.model.dims
        total = sum(w.size for w in checkpoint.model.params())
        print(f"checkpoint: p={dims.p} d1={dims.d1} d2={dims.d2} "
              f"m={dims.m} layers={dims.layers} k1={dims.k1} k2={dims.k2} "
              f"pooling={dims.pooling} standardize="
              f"{_format_value(dims.standardize)}")
        print(f"labels: {', '.join(checkpoint.label_names)}")
        print(f"parameters: {total}")
        return 0
    raise BadMagic(f"{args.file} is not a dataset or checkpoint file")


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None,
                     help="key=value config file; flags override it")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: CGNN_THREADS or 1)")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if _FIELD_TYPES[f.name] is bool:
            sub.add_argument(flag, dest=f.name, default=None,
                             action=argparse.BooleanOptionalAction,
                             help=f"(default {_format_value(f.default)})")
        else:
            sub.add_argument(flag, dest=f.name, default=None,
                             type=_FIELD_TYPES[f.name],
                             help=f"(default {_format_value(f.default)})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgnn",
        description="Classify pcap traffic sessions with a chained-graph "
                    "neural network.")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser(
        "preprocess",
        help="build a dataset from <root>/<label>/*.pcap directories")
    sub.add_argument("root", help="directory of per-label pcap directories")
    sub.add_argument("out", help="output dataset path (.cgd1)")
    _add_config_flags(sub)
    sub.set_defaults(func=cmd_preprocess)

    sub = commands.add_parser("train",
                              help="train a model on a dataset file")
    sub.add_argument("data", help="dataset path (.cgd1)")
    sub.add_argument("out", help="output directory for the checkpoint")
    _add_config_flags(sub)
    sub.set_defaults(func=cmd_train)

    sub = commands.add_parser("evaluate",
                              help="score a checkpoint against a dataset")
    sub.add_argument("data", help="dataset path (.cgd1)")
    sub.add_argument("checkpoint", help="checkpoint path (.cgm1)")
    sub.add_argument("--split", choices=("test", "all"), default="test",
                     help="which graphs to score (default test)")
    sub.add_argument("--heatmap", type=Path, default=None,
                     help="confusion CSV path (default next to checkpoint)")
    sub.add_argument("--weighted", action="store_true",
                     help="weigh macro averages by class support")
    _add_config_flags(sub)
    sub.set_defaults(func=cmd_evaluate)

    sub = commands.add_parser("predict",
                              help="classify every session in one pcap")
    sub.add_argument("pcap", help="capture file to classify")
    sub.add_argument("checkpoint", help="checkpoint path (.cgm1)")
    sub.add_argument("--csv", type=Path, default=None,
                     help="also write per-session probabilities as CSV")
    _add_config_flags(sub)
    sub.set_defaults(func=cmd_predict)

    sub = commands.add_parser("inspect",
                              help="describe a dataset or checkpoint file")
    sub.add_argument("file", help="path to a .cgd1 or .cgm1 file")
    sub.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CgnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
