import csv
import json

import pytest
import yaml
from hypothesis import given, strategies as st

from sparsepush.errors import ConfigError, FormatError, NumericalFailure
from sparsepush.harness import (
    OUTPUT_ROOT_ENV,
    PLOT_COLUMNS,
    SWEEP_COLUMNS,
    apply_overrides,
    config_to_dict,
    emit_plot_data,
    expand_cells,
    load_config,
    parse_config,
    resolve_output_dir,
    run_experiment,
)

SMALL = {
    "version": 1,
    "seed": 0,
    "output_dir": "out",
    "dataset": {"kind": "blobs", "num_classes": 3, "per_class": 40, "test_per_class": 20, "d_in": 4},
    "train": {"epochs": 2, "sgd": {"batch_size": 8}},
}


def _cfg(**changes):
    doc = yaml.safe_load(yaml.safe_dump(SMALL))
    for key, value in changes.items():
        target = doc
        *parents, leaf = key.split(".")
        for p in parents:
            target = target.setdefault(p, {})
        target[leaf] = value
    return doc


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_defaults_parse():
    cfg = parse_config(_cfg())
    assert cfg.partition.n_nodes == 4
    assert cfg.train.eta == 1.0
    assert cfg.train.arch.d_in == 4 and cfg.train.arch.d_out == 3
    assert len(expand_cells(cfg)) == 1


@pytest.mark.parametrize(
    "key, value, path",
    [
        ("train.eta", 1.5, "train.eta"),
        ("train.eta", 0, "train.eta"),
        ("version", 2, "version"),
        ("train.compression", "top_k:0", "train.compression"),
        ("train.compression", "zip", "train.compression"),
        ("train.sgd.lr", -1, "train.sgd.lr"),
        ("train.wat", 1, "train.wat"),
        ("partition.skew", 1.2, "partition.skew"),
        ("topology.graphs", [{"kind": "edges", "n": 3, "edges": [[0, 1]]}], "topology.graphs[0]"),
        ("sweep.skew", [], "sweep.skew"),
        ("sweep.algorithm", ["sp", "scsp"], "train.scsp_k"),
        ("sweep.algorithm", ["xx"], "sweep.algorithm[0]"),
        ("dataset.d_in", 1, "dataset.d_in"),
        ("train.epochs", 1.5, "train.epochs"),
        ("train.isolated", "yes", "train.isolated"),
    ],
)
def test_validation_names_field(key, value, path):
    with pytest.raises(ConfigError) as info:
        parse_config(_cfg(**{key: value}))
    assert info.value.path == path
    assert str(info.value).startswith(path)


config_docs = st.fixed_dictionaries(
    {
        "skew": st.sampled_from([0.0, 0.25, 0.8]),
        "comp": st.sampled_from(["identity", "top_k:0.01", "quant:4", {"kind": "top_k", "k_fraction": 0.1}]),
        "eta": st.one_of(st.just("auto"), st.floats(0.001, 1.0)),
        "epochs": st.integers(0, 5),
        "graphs": st.sampled_from([[{"kind": "ring", "n": 3}], [{"kind": "graph_a"}, {"kind": "graph_c"}]]),
        "sweep": st.booleans(),
    }
)


def test_tail_eta_parsing():
    assert parse_config(_cfg()).train.tail_eta is None
    assert parse_config(_cfg(**{"train.tail_eta": "train"})).train.tail_eta is None
    assert parse_config(_cfg(**{"train.tail_eta": 0.5})).train.tail_eta == 0.5
    assert config_to_dict(parse_config(_cfg()))["train"]["tail_eta"] == "train"
    with pytest.raises(ConfigError, match="train.tail_eta"):
        parse_config(_cfg(**{"train.tail_eta": 0}))


@given(doc=config_docs)
def test_round_trip(doc):
    raw = _cfg(**{
        "partition.skew": doc["skew"],
        "train.compression": doc["comp"],
        "train.eta": doc["eta"],
        "train.epochs": doc["epochs"],
        "topology.graphs": doc["graphs"],
    })
    if doc["sweep"]:
        raw["sweep"] = {"skew": [0.0, 0.5], "compression": ["identity", "quant:2b"], "seed": [3, 1]}
    cfg = parse_config(raw)
    normal = config_to_dict(cfg)
    again = parse_config(yaml.safe_load(yaml.safe_dump(normal)))
    assert again == cfg
    assert config_to_dict(again) == normal


def test_sweep_cross_product(tmp_path):
    raw = _cfg(**{"train.scsp_k": 3, "output_dir": str(tmp_path / "o")})
    raw["sweep"] = {"skew": [0.0, 0.4, 0.8], "algorithm": ["sp", "scsp"]}
    sweep = run_experiment(parse_config(raw))
    rows = _rows(sweep)
    assert len(rows) == 6
    assert list(rows[0]) == list(SWEEP_COLUMNS)
    dirs = sorted(p.name for p in (tmp_path / "o").iterdir() if p.is_dir())
    assert len(dirs) == 6 and dirs == sorted(r["cell"] for r in rows)
    for r in rows:
        cell = tmp_path / "o" / r["cell"]
        assert (cell / "runlog.csv").exists()
        summary = json.loads((cell / "summary.json").read_text())
        assert summary["total_bytes"] == int(r["total_bytes"])
    sp = [r for r in rows if r["algorithm"] == "sp"]
    scsp = [r for r in rows if r["algorithm"] == "scsp"]
    assert all(int(b["total_bytes"]) > int(a["total_bytes"]) for a, b in zip(sp, scsp))


def test_rerun_identical_bytes_and_jobs(tmp_path):
    raw = _cfg(**{"train.compression": "top_k:0.1"})
    raw["sweep"] = {"skew": [0.0, 0.8], "seed": [0, 1]}
    outs = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 3)):
        raw["output_dir"] = str(tmp_path / name)
        outs.append(run_experiment(parse_config(raw), jobs=jobs).read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_adding_cells_keeps_existing_rows(tmp_path):
    raw = _cfg(output_dir=str(tmp_path / "one"))
    raw["sweep"] = {"skew": [0.8]}
    one = _rows(run_experiment(parse_config(raw)))
    raw["output_dir"] = str(tmp_path / "two")
    raw["sweep"] = {"skew": [0.0, 0.8], "seed": [0, 5]}
    two = _rows(run_experiment(parse_config(raw)))
    match = [r for r in two if r["skew"] == "0.8" and r["seed"] == "0"]
    assert match[0]["final_accuracy"] == one[0]["final_accuracy"]
    assert match[0]["total_bytes"] == one[0]["total_bytes"]


def test_shared_training_matches_separate_runs(tmp_path):
    from sparsepush.harness import run_cell

    raw = _cfg(**{"train.scsp_k": 4, "train.compression": "top_k:0.1", "output_dir": str(tmp_path / "s")})
    raw["sweep"] = {"skew": [0.8], "algorithm": ["sp", "scsp"]}
    cfg = parse_config(raw)
    shared = _rows(run_experiment(cfg))
    for cell, row in zip(expand_cells(cfg), shared):
        alone = run_cell(cfg, cell, tmp_path / "alone")
        assert repr(alone["final_accuracy"]) == row["final_accuracy"]
        assert str(alone["total_bytes"]) == row["total_bytes"]
        log = (tmp_path / "alone" / cell.name / "runlog.csv").read_text()
        assert log == (tmp_path / "s" / cell.name / "runlog.csv").read_text()


def test_paired_cells_share_initial_data(tmp_path):
    raw = _cfg(output_dir=str(tmp_path))
    raw["sweep"] = {"compression": ["identity", "top_k:0.5"]}
    cfg = parse_config(raw)
    a, b = expand_cells(cfg)
    assert a.seed == b.seed


def test_partial_results_flushed(tmp_path, monkeypatch):
    import sparsepush.harness as h

    raw = _cfg(output_dir=str(tmp_path))
    raw["sweep"] = {"skew": [0.0, 0.5, 0.9]}
    cfg = parse_config(raw)
    original = h.run_cells

    def flaky(cfg, cells, out_dir, data=None):
        if cells[0].index == 2:
            raise NumericalFailure("boom")
        return original(cfg, cells, out_dir, data)

    monkeypatch.setattr(h, "run_cells", flaky)
    with pytest.raises(NumericalFailure):
        run_experiment(cfg)
    assert len(_rows(tmp_path / "sweep.csv")) == 2


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = parse_config(_cfg(output_dir="nested/run"))
    assert resolve_output_dir(cfg) == tmp_path / "nested" / "run"
    sweep = run_experiment(cfg)
    assert sweep == tmp_path / "nested" / "run" / "sweep.csv"


def test_overrides():
    cfg = apply_overrides(parse_config(_cfg()), seed=9, epochs=1, workers=2, jobs=None, output_dir="x")
    assert cfg.seed == 9 and cfg.train.seed == 9 and cfg.train.epochs == 1
    assert cfg.train.workers == 2 and cfg.output_dir == "x" and cfg.jobs == 1


def test_csv_dataset_and_partition_export(tmp_path):
    (tmp_path / "train.csv").write_text("".join(f"{i % 3}.0,{i}.5,{i % 3}\n" for i in range(40)))
    (tmp_path / "test.csv").write_text("0.0,1.0,0\n1.0,2.0,1\n2.0,0.0,2\n")
    doc = _cfg(output_dir=str(tmp_path / "out"))
    doc["dataset"] = {"kind": "csv", "num_classes": 3, "path": "train.csv", "test_path": "test.csv"}
    doc["partition"] = {"export": True}
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(doc))
    sweep = run_experiment(load_config(path))
    cell = tmp_path / "out" / _rows(sweep)[0]["cell"]
    exported = sorted(p.name for p in (cell / "partitions").iterdir())
    assert exported == [f"node_{i}.csv" for i in range(4)]


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("version: [1,\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_plot_data_grouping(tmp_path):
    sweep = tmp_path / "sweep.csv"
    with sweep.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for seed, skew, comp, algo, acc in [
            (0, 0.0, "identity", "sp", 0.9), (1, 0.0, "identity", "sp", 0.8),
            (0, 0.8, "top_k:0.01", "sp", 0.5), (0, 0.8, "top_k:0.01", "scsp", 0.7),
        ]:
            w.writerow([f"c{seed}", seed, skew, comp, algo, 1.0, acc, 0.0, 10, 1.0])
    out = emit_plot_data(sweep)
    rows = _rows(out)
    assert list(rows[0]) == list(PLOT_COLUMNS)
    assert len(rows) == 3
    first = rows[0]
    assert (first["skew"], first["compression"], first["n_seeds"]) == ("0.0", "identity", "2")
    assert float(first["mean_accuracy"]) == pytest.approx(0.85)


def test_plot_data_single_cell(tmp_path):
    raw = _cfg(output_dir=str(tmp_path))
    rows = _rows(emit_plot_data(run_experiment(parse_config(raw))))
    assert len(rows) == 1


def test_plot_data_missing_columns(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("skew,compression\n0,identity\n")
    with pytest.raises(FormatError):
        emit_plot_data(p)
    with pytest.raises(FormatError):
        emit_plot_data(tmp_path / "nope.csv")
