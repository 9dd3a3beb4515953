"""Experiment configuration, sweeps and result files.

A config is one YAML document with ``version: 1``. Every section is optional
except ``dataset``; see ``configs/demo.yaml`` for the full set of keys.

Seeding: each sweep cell runs with seed ``s`` taken from ``sweep.seed`` (or the
top-level ``seed``). All random streams of the cell are ``substream(s, label)``,
so cells that differ only in skew, compression or algorithm share their data,
initial model and minibatch streams, and adding cells never changes others.

Outputs under the output directory::

    <cell>/runlog.csv      one row per evaluation point
    <cell>/summary.json    final metrics
    sweep.csv              one row per finished cell, rewritten after each cell
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .compression import CompressionSpec
from .data import LabeledDataset, PartitionSpec, gen_blobs, load_csv, partition, save_csv
from .errors import ConfigError, FormatError, InvalidArgument
from .learning import MODEL_KINDS, Architecture, SgdConfig
from .seeding import substream
from .topology import GraphSchedule, build_topology
from .trainer import RunLog, TrainConfig, default_eta, scsp_train

__all__ = [
    "DatasetSpec",
    "Cell",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "config_to_dict",
    "expand_cells",
    "run_experiment",
    "run_cell",
    "run_cells",
    "emit_plot_data",
    "OUTPUT_ROOT_ENV",
    "SWEEP_COLUMNS",
    "PLOT_COLUMNS",
]

CONFIG_VERSION = 1
OUTPUT_ROOT_ENV = "SPARSEPUSH_OUTPUT_ROOT"
ALGORITHMS = ("sp", "scsp")

SWEEP_COLUMNS = (
    "cell",
    "seed",
    "skew",
    "compression",
    "algorithm",
    "eta",
    "final_accuracy",
    "final_divergence",
    "total_bytes",
    "compression_factor",
)
PLOT_COLUMNS = ("skew", "compression", "algorithm", "n_seeds", "mean_accuracy", "std_accuracy")


@dataclass(frozen=True)
class DatasetSpec:
    """Synthetic blobs or a pair of CSV files."""

    kind: str = "blobs"
    num_classes: int = 4
    per_class: int = 1000
    test_per_class: int = 250
    d_in: int = 9
    separation: float = 2.0
    path: str | None = None
    test_path: str | None = None

    def load(self, seed: int, base_dir: Path) -> tuple[LabeledDataset, LabeledDataset]:
        if self.kind == "blobs":
            # Class means depend only on the geometry, so train and test agree.
            train = gen_blobs(self.num_classes, self.per_class, self.d_in, self.separation, substream(seed, "dataset"))
            test = gen_blobs(
                self.num_classes, self.test_per_class, self.d_in, self.separation, substream(seed, "dataset/test")
            )
            return train, test
        train = load_csv(base_dir / self.path, self.num_classes)
        test = load_csv(base_dir / self.test_path, self.num_classes)
        if train.d_in != test.d_in:
            raise FormatError(f"train has {train.d_in} features, test has {test.d_in}")
        return train, test


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    partition: PartitionSpec
    train: TrainConfig
    output_dir: str = "results"
    seed: int = 0
    jobs: int = 1
    export_partitions: bool = False
    eta_auto: bool = True
    sweep: dict[str, tuple] = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False)


@dataclass(frozen=True)
class Cell:
    index: int
    seed: int
    skew: float
    compression: CompressionSpec
    algorithm: str

    @property
    def name(self) -> str:
        comp = self.compression.label.replace(":", "")
        return f"{self.index:03d}_skew{self.skew:g}_{comp}_{self.algorithm}_seed{self.seed}"


# ---------------------------------------------------------------- parsing


def _section(raw: dict, key: str, path: str) -> dict:
    value = raw.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(section: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, f"unknown key; expected one of {sorted(allowed)}")


def _number(section: dict, key: str, path: str, default, kind=float, lo=None, hi=None, lo_open=False):
    value = section.get(key, default)
    where = f"{path}.{key}" if path else key
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(where, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(where, f"expected a finite number, got {value!r}")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(where, f"must be {'>' if lo_open else '>='} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(where, f"must be <= {hi}, got {value!r}")
    return value


def _bool(section: dict, key: str, path: str, default: bool) -> bool:
    value = section.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected true or false, got {value!r}")
    return value


def parse_compression(value: Any, path: str) -> CompressionSpec:
    """Accepts ``identity``, ``top_k:<fraction>``, ``quant:<bits>`` or a mapping."""
    try:
        if isinstance(value, dict):
            return CompressionSpec.from_dict(value)
        if isinstance(value, str):
            name, _, arg = value.partition(":")
            if name == "identity" and not arg:
                return CompressionSpec.identity()
            if name == "top_k" and arg:
                return CompressionSpec.top_k(float(arg))
            if name == "quant" and arg:
                return CompressionSpec.quant(int(arg.rstrip("b")))
        raise ConfigError(path, f"cannot read compression {value!r}; use identity, top_k:<f> or quant:<bits>")
    except (InvalidArgument, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None


def _parse_dataset(raw: dict) -> DatasetSpec:
    sec = _section(raw, "dataset", "dataset")
    _check_keys(sec, {f for f in DatasetSpec.__dataclass_fields__}, "dataset")
    kind = sec.get("kind", "blobs")
    if kind not in ("blobs", "csv"):
        raise ConfigError("dataset.kind", f"expected blobs or csv, got {kind!r}")
    spec = DatasetSpec(
        kind=kind,
        num_classes=_number(sec, "num_classes", "dataset", 4, int, lo=1),
        per_class=_number(sec, "per_class", "dataset", 1000, int, lo=1),
        test_per_class=_number(sec, "test_per_class", "dataset", 250, int, lo=1),
        d_in=_number(sec, "d_in", "dataset", 9, int, lo=1),
        separation=_number(sec, "separation", "dataset", 2.0, lo=0),
        path=sec.get("path"),
        test_path=sec.get("test_path"),
    )
    if kind == "csv":
        for key in ("path", "test_path"):
            if not isinstance(sec.get(key), str):
                raise ConfigError(f"dataset.{key}", "required for csv datasets")
    elif spec.num_classes > 1 and spec.d_in < spec.num_classes - 1:
        raise ConfigError("dataset.d_in", f"blobs with {spec.num_classes} classes need d_in >= {spec.num_classes - 1}")
    return spec


def _parse_schedule(raw: dict) -> GraphSchedule:
    sec = _section(raw, "topology", "topology")
    _check_keys(sec, {"graphs", "rotation_period"}, "topology")
    graphs = sec.get("graphs", [{"kind": "ring", "n": 4}])
    if not isinstance(graphs, list) or not graphs:
        raise ConfigError("topology.graphs", "expected a non-empty list of graphs")
    topos = []
    for i, g in enumerate(graphs):
        where = f"topology.graphs[{i}]"
        if not isinstance(g, dict):
            raise ConfigError(where, "expected a mapping")
        try:
            topos.append(build_topology(g))
        except (InvalidArgument, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(where, str(exc)) from None
    period = _number(sec, "rotation_period", "topology", 1, int, lo=1)
    try:
        return GraphSchedule(tuple(topos), period)
    except InvalidArgument as exc:
        raise ConfigError("topology.graphs", str(exc)) from None


def _parse_sgd(train: dict) -> SgdConfig:
    sec = _section(train, "sgd", "train.sgd")
    _check_keys(sec, {"lr", "momentum", "weight_decay", "batch_size", "lr_drops"}, "train.sgd")
    drops = sec.get("lr_drops", [])
    if not isinstance(drops, list) or any(not isinstance(d, (list, tuple)) or len(d) != 2 for d in drops):
        raise ConfigError("train.sgd.lr_drops", "expected a list of [epoch, multiplier] pairs")
    try:
        return SgdConfig(
            lr=_number(sec, "lr", "train.sgd", 0.05, lo=0, lo_open=True),
            momentum=_number(sec, "momentum", "train.sgd", 0.9, lo=0),
            weight_decay=_number(sec, "weight_decay", "train.sgd", 1e-4, lo=0),
            batch_size=_number(sec, "batch_size", "train.sgd", 32, int, lo=1),
            lr_drops=tuple((int(e), float(m)) for e, m in drops),
        )
    except InvalidArgument as exc:
        raise ConfigError("train.sgd", str(exc)) from None


def parse_config(raw: Any, base_dir: str | Path = ".") -> ExperimentConfig:
    """Validate a decoded config document; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    _check_keys(
        raw,
        {"version", "seed", "output_dir", "jobs", "dataset", "partition", "topology", "model", "train", "sweep"},
        "",
    )
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError("version", f"expected {CONFIG_VERSION}, got {raw.get('version')!r}")
    seed = _number(raw, "seed", "", 0, int, lo=0)
    jobs = _number(raw, "jobs", "", 1, int, lo=1)
    output_dir = raw.get("output_dir", "results")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir", "expected a non-empty path")

    dataset = _parse_dataset(raw)
    schedule = _parse_schedule(raw)

    psec = _section(raw, "partition", "partition")
    _check_keys(psec, {"skew", "export"}, "partition")
    pspec = PartitionSpec(schedule.n, _number(psec, "skew", "partition", 0.0, lo=0, hi=1), seed)
    export = _bool(psec, "export", "partition", False)

    msec = _section(raw, "model", "model")
    _check_keys(msec, {"kind", "hidden"}, "model")
    kind = msec.get("kind", "logistic_softmax")
    if kind not in MODEL_KINDS or kind == "linear_regression":
        raise ConfigError("model.kind", f"expected logistic_softmax or mlp_1hidden, got {kind!r}")
    hidden = _number(msec, "hidden", "model", 16 if kind == "mlp_1hidden" else 0, int, lo=0)
    d_in = dataset.d_in if dataset.kind == "blobs" else None

    tsec = _section(raw, "train", "train")
    _check_keys(
        tsec,
        {"eta", "compression", "epochs", "scsp_k", "tail_eta", "dtype", "eval_every", "isolated", "workers", "sgd"},
        "train",
    )
    compression = parse_compression(tsec.get("compression", "identity"), "train.compression")
    eta_raw = tsec.get("eta", "auto")
    eta_auto = eta_raw == "auto"
    eta = default_eta(compression) if eta_auto else _number(tsec, "eta", "train", None, lo=0, hi=1, lo_open=True)
    dtype = tsec.get("dtype", "float32")
    if dtype not in ("float32", "float64"):
        raise ConfigError("train.dtype", f"expected float32 or float64, got {dtype!r}")
    train = TrainConfig(
        schedule=schedule,
        # Placeholder input width for csv datasets; fixed up once the data is read.
        arch=Architecture(kind, d_in or 1, dataset.num_classes, hidden),
        sgd=_parse_sgd(tsec),
        compression=compression,
        eta=eta,
        epochs=_number(tsec, "epochs", "train", 10, int, lo=0),
        scsp_k=_number(tsec, "scsp_k", "train", 0, int, lo=0),
        tail_eta=None
        if tsec.get("tail_eta", "train") == "train"
        else _number(tsec, "tail_eta", "train", None, lo=0, hi=1, lo_open=True),
        seed=seed,
        dtype=dtype,
        eval_every=_number(tsec, "eval_every", "train", 1, int, lo=1),
        isolated=_bool(tsec, "isolated", "train", False),
        workers=_number(tsec, "workers", "train", 1, int, lo=1),
    )

    sweep = _parse_sweep(raw, train)
    return ExperimentConfig(
        dataset=dataset,
        partition=pspec,
        train=train,
        output_dir=output_dir,
        seed=seed,
        jobs=jobs,
        export_partitions=export,
        eta_auto=eta_auto,
        sweep=sweep,
        base_dir=Path(base_dir),
    )


def _parse_sweep(raw: dict, train: TrainConfig) -> dict[str, tuple]:
    sec = _section(raw, "sweep", "sweep")
    _check_keys(sec, {"skew", "compression", "algorithm", "seed"}, "sweep")
    axes: dict[str, tuple] = {}
    for key, values in sec.items():
        where = f"sweep.{key}"
        if not isinstance(values, list) or not values:
            raise ConfigError(where, "expected a non-empty list")
        parsed = []
        for i, v in enumerate(values):
            item = {key: v}
            if key == "skew":
                parsed.append(_number(item, key, "sweep", None, lo=0, hi=1))
            elif key == "seed":
                parsed.append(_number(item, key, "sweep", None, int, lo=0))
            elif key == "compression":
                parsed.append(parse_compression(v, f"{where}[{i}]"))
            else:
                if v not in ALGORITHMS:
                    raise ConfigError(f"{where}[{i}]", f"expected sp or scsp, got {v!r}")
                parsed.append(v)
        axes[key] = tuple(parsed)
    if "scsp" in axes.get("algorithm", ()) and train.scsp_k == 0:
        raise ConfigError("train.scsp_k", "must be > 0 when sweep.algorithm includes scsp")
    return axes


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from None
    return parse_config(raw, path.parent)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Normalized document that parses back to an equal config."""
    t = cfg.train
    topo = [g.to_dict() for g in t.schedule.topologies]
    ds = {
        k: getattr(cfg.dataset, k)
        for k in DatasetSpec.__dataclass_fields__
        if getattr(cfg.dataset, k) is not None
    }
    doc = {
        "version": CONFIG_VERSION,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "jobs": cfg.jobs,
        "dataset": ds,
        "partition": {"skew": cfg.partition.skew, "export": cfg.export_partitions},
        "topology": {"graphs": topo, "rotation_period": t.schedule.rotation_period},
        "model": {"kind": t.arch.kind, "hidden": t.arch.hidden},
        "train": {
            "eta": "auto" if cfg.eta_auto else t.eta,
            "compression": t.compression.to_dict(),
            "epochs": t.epochs,
            "scsp_k": t.scsp_k,
            "tail_eta": "train" if t.tail_eta is None else t.tail_eta,
            "dtype": t.dtype,
            "eval_every": t.eval_every,
            "isolated": t.isolated,
            "workers": t.workers,
            "sgd": {
                "lr": t.sgd.lr,
                "momentum": t.sgd.momentum,
                "weight_decay": t.sgd.weight_decay,
                "batch_size": t.sgd.batch_size,
                "lr_drops": [list(d) for d in t.sgd.lr_drops],
            },
        },
    }
    if cfg.sweep:
        sweep = {}
        for key, values in cfg.sweep.items():
            sweep[key] = [v.to_dict() if isinstance(v, CompressionSpec) else v for v in values]
        doc["sweep"] = sweep
    return doc


def apply_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """CLI overrides; ``None`` values leave the config untouched."""
    doc = config_to_dict(cfg)
    mapping = {
        "seed": ("seed",),
        "output_dir": ("output_dir",),
        "jobs": ("jobs",),
        "epochs": ("train", "epochs"),
        "workers": ("train", "workers"),
    }
    for key, value in overrides.items():
        if value is None:
            continue
        target = doc
        *parents, leaf = mapping[key]
        for p in parents:
            target = target[p]
        target[leaf] = value
    return parse_config(doc, cfg.base_dir)


# ---------------------------------------------------------------- running


def expand_cells(cfg: ExperimentConfig) -> list[Cell]:
    """Cross product of the sweep axes in the order seed, skew, compression, algorithm."""
    seeds = cfg.sweep.get("seed", (cfg.seed,))
    skews = cfg.sweep.get("skew", (cfg.partition.skew,))
    comps = cfg.sweep.get("compression", (cfg.train.compression,))
    algos = cfg.sweep.get("algorithm", ("scsp" if cfg.train.scsp_k > 0 else "sp",))
    return [
        Cell(i, s, k, c, a) for i, (s, k, c, a) in enumerate(itertools.product(seeds, skews, comps, algos))
    ]


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    """Relative output paths resolve against ``$SPARSEPUSH_OUTPUT_ROOT`` if set, else the cwd."""
    out = Path(cfg.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def cell_train_config(cfg: ExperimentConfig, cell: Cell, d_in: int) -> TrainConfig:
    t = cfg.train
    eta = default_eta(cell.compression) if cfg.eta_auto else t.eta
    return replace(
        t,
        arch=replace(t.arch, d_in=d_in),
        compression=cell.compression,
        eta=eta,
        seed=cell.seed,
        scsp_k=t.scsp_k if cell.algorithm == "scsp" else 0,
    )


def _write_cell(cfg: ExperimentConfig, cell: Cell, out_dir: Path, log: RunLog, parts, eta: float) -> dict:
    cell_dir = out_dir / cell.name
    cell_dir.mkdir(parents=True, exist_ok=True)
    (cell_dir / "runlog.csv").write_text(log.to_csv())
    (cell_dir / "summary.json").write_text(log.summary_json())
    if cfg.export_partitions:
        pdir = cell_dir / "partitions"
        pdir.mkdir(exist_ok=True)
        for i, shard in enumerate(parts):
            save_csv(shard, pdir / f"node_{i}.csv")
    return {
        "cell": cell.name,
        "seed": cell.seed,
        "skew": cell.skew,
        "compression": cell.compression.label,
        "algorithm": cell.algorithm,
        "eta": eta,
        **log.summary(),
    }


def run_cells(cfg: ExperimentConfig, cells: list[Cell], out_dir: Path, data=None) -> list[dict]:
    """Train cells that differ only in algorithm, write their outputs, return their sweep rows.

    The training phase of the skew-compensated variant is identical to plain
    training, so one run serves every cell: plain cells get the run log up to
    the end of training.
    """
    first = cells[0]
    if any((c.seed, c.skew, c.compression) != (first.seed, first.skew, first.compression) for c in cells):
        raise InvalidArgument("run_cells needs cells that differ only in algorithm")
    train, test = data if data is not None else cfg.dataset.load(first.seed, cfg.base_dir)
    parts = partition(
        train, PartitionSpec(cfg.partition.n_nodes, first.skew, first.seed), substream(first.seed, "partition")
    )
    lead = next((c for c in cells if c.algorithm == "scsp"), first)
    tcfg = cell_train_config(cfg, lead, train.d_in)
    _, log = scsp_train(tcfg, parts, test)
    rows = []
    for cell in cells:
        cell_log = log if cell.algorithm == "scsp" else log.train_only()
        rows.append(_write_cell(cfg, cell, out_dir, cell_log, parts, tcfg.eta))
    return rows


def run_cell(cfg: ExperimentConfig, cell: Cell, out_dir: Path, data=None) -> dict:
    """Train one cell, write its run log and summary, return its sweep row."""
    return run_cells(cfg, [cell], out_dir, data)[0]


def _group_cells(cells: list[Cell]) -> list[list[Cell]]:
    groups: dict[tuple, list[Cell]] = {}
    for c in cells:
        groups.setdefault((c.seed, c.skew, c.compression), []).append(c)
    return sorted(groups.values(), key=lambda g: g[0].index)


def _write_rows(path: Path, columns, rows) -> None:
    tmp = path.with_suffix(".tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    tmp.replace(path)


def run_experiment(cfg: ExperimentConfig | str | Path, jobs: int | None = None) -> Path:
    """Run every sweep cell; returns the path of ``sweep.csv``.

    Rows are written in cell order as soon as every earlier cell has finished,
    so a failure leaves the completed prefix on disk before the error propagates.
    """
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    out_dir = resolve_output_dir(cfg)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("output_dir", f"cannot create {out_dir}: {exc.strerror}") from None
    if not os.access(out_dir, os.W_OK):
        raise ConfigError("output_dir", f"{out_dir} is not writable")
    (out_dir / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))

    cells = expand_cells(cfg)
    datasets: dict[int, tuple] = {}
    for s in sorted({c.seed for c in cells}):
        datasets[s] = cfg.dataset.load(s, cfg.base_dir)

    sweep_path = out_dir / "sweep.csv"
    rows: list[dict] = []
    _write_rows(sweep_path, SWEEP_COLUMNS, rows)
    groups = _group_cells(cells)
    workers = jobs if jobs is not None else cfg.jobs

    def flush(new_rows: list[dict]) -> None:
        # Algorithm is the innermost sweep axis, so groups arrive in cell order.
        rows.extend(new_rows)
        _write_rows(sweep_path, SWEEP_COLUMNS, rows)

    if workers <= 1:
        for group in groups:
            flush(run_cells(cfg, group, out_dir, datasets[group[0].seed]))
        return sweep_path

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_cells, cfg, g, out_dir, datasets[g[0].seed]) for g in groups]
        try:
            for fut in futures:
                flush(fut.result())
        except BaseException:
            for fut in futures:
                fut.cancel()
            raise
    return sweep_path


def emit_plot_data(sweep_csv: str | Path, out_path: str | Path | None = None) -> Path:
    """Aggregate ``sweep.csv`` over seeds into a long table keyed by (skew, compression, algorithm)."""
    sweep_csv = Path(sweep_csv)
    try:
        with sweep_csv.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise FormatError(f"{sweep_csv}: cannot read: {exc.strerror}") from None
    missing = [c for c in ("seed", "skew", "compression", "algorithm", "final_accuracy") if c not in header]
    if missing:
        raise FormatError(f"{sweep_csv}: missing columns {missing}")
    groups: dict[tuple, list[float]] = {}
    for r, row in enumerate(rows, start=2):
        try:
            key = (float(row["skew"]), row["compression"], row["algorithm"])
            groups.setdefault(key, []).append(float(row["final_accuracy"]))
        except (TypeError, ValueError):
            raise FormatError(f"{sweep_csv}: row {r}: non-numeric skew or accuracy") from None
    out = []
    for (skew, comp, algo), accs in sorted(groups.items()):
        a = np.asarray(accs)
        out.append(
            {
                "skew": skew,
                "compression": comp,
                "algorithm": algo,
                "n_seeds": len(accs),
                "mean_accuracy": float(a.mean()),
                "std_accuracy": float(a.std(ddof=1)) if len(accs) > 1 else 0.0,
            }
        )
    target = Path(out_path) if out_path is not None else sweep_csv.with_name("plot_data.csv")
    _write_rows(target, PLOT_COLUMNS, out)
    return target
