import csv
import json
from pathlib import Path

import numpy as np
import pytest

from consearch.cli import EXIT_OK, EXIT_RUNTIME, EXIT_SCHEMA, main
from consearch.plots import aggregate_metric, read_rounds_csv
from consearch.presets import PRESET_NAMES, apply_overrides, preset_cells, run_bench

TOY_CONFIG = """\
schema_version: 1
master_seed: 3
rounds: 2
query_batch: 6
half_batch: 4
top_k: 12
oracle: {kind: nk, length: 6, vocab_size: 4, k: 2, seed: 5}
init: {kind: clustered, size: 40, max_radius: 2, seed_percentile: 70}
proxy: {hidden: 16, learning_rate: 5.0e-3, batch_size: 16, max_updates: 30, min_split_size: 64}
acquisition: {kind: ucb, kappa: 0.1}
policy: {emb_dim: 8, hidden: 16, layers: 1, steps: 3, learning_rate: 1.0e-3}
sampler: {kind: deltacs, mode: constant, delta_const: 0.5, lam: 0.0}
"""


@pytest.fixture
def toy_config_path(tmp_path) -> Path:
    path = tmp_path / "toy.yaml"
    path.write_text(TOY_CONFIG)
    return path


def latest_run_dir(root: Path) -> Path:
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    assert dirs, f"no run directory under {root}"
    return dirs[-1]


class TestCmdRun:
    def test_missing_required_key_names_it(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("rounds: 3\noracle: {length: 8}\n")
        code = main(["run", "--config", str(bad), "--out", str(tmp_path / "out")])
        assert code == EXIT_SCHEMA
        assert "oracle.kind" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)])
        assert code == EXIT_SCHEMA

    def test_toy_run_writes_artifacts(self, toy_config_path, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", str(toy_config_path), "--out", str(out)]) == EXIT_OK
        run_dir = latest_run_dir(out)
        assert (run_dir / "manifest.json").exists()
        rows = (run_dir / "rounds.csv").read_text().splitlines()
        assert len(rows) == 3  # header + 2 rounds
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["master_seed"] == 3
        assert len(manifest["config_hash"]) == 64

    def test_manifest_layout_files_exist(self, toy_config_path, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", str(toy_config_path), "--out", str(out)]) == EXIT_OK
        run_dir = latest_run_dir(out)
        manifest = json.loads((run_dir / "manifest.json").read_text())
        for rel in manifest["layout"].values():
            assert (run_dir / rel).exists(), f"manifest references missing {rel}"

    def test_same_seed_identical_bytes(self, toy_config_path, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(toy_config_path), "--seed", "7", "--out", str(out_a)])
        main(["run", "--config", str(toy_config_path), "--seed", "7", "--out", str(out_b)])
        a = (latest_run_dir(out_a) / "rounds.csv").read_bytes()
        b = (latest_run_dir(out_b) / "rounds.csv").read_bytes()
        assert a == b

    def test_env_var_output_root(self, toy_config_path, tmp_path, monkeypatch):
        monkeypatch.setenv("DCS_OUT_DIR", str(tmp_path / "env_root"))
        assert main(["run", "--config", str(toy_config_path)]) == EXIT_OK
        assert (tmp_path / "env_root").exists()

    def test_set_override(self, toy_config_path, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--config", str(toy_config_path), "--out", str(out),
                     "--set", "rounds=1", "--set", "policy.steps=1"])
        assert code == EXIT_OK
        rows = (latest_run_dir(out) / "rounds.csv").read_text().splitlines()
        assert len(rows) == 2


class TestCmdOracleDump:
    def test_row_count_and_order(self, toy_config_path, tmp_path):
        out_csv = tmp_path / "dump.csv"
        assert main(["oracle-dump", "--config", str(toy_config_path), "--out", str(out_csv)]) == EXIT_OK
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "sequence,score"
        assert len(lines) == 4**6 + 1
        seqs = [line.split(",")[0] for line in lines[1:]]
        assert seqs == sorted(seqs)

    def test_hard_variant_has_no_scores_inside_gap(self, toy_config_path, tmp_path):
        out_csv = tmp_path / "hard.csv"
        code = main(["oracle-dump", "--config", str(toy_config_path), "--out", str(out_csv),
                     "--set", "oracle.hard_threshold=0.5"])
        assert code == EXIT_OK
        with open(out_csv) as fh:
            scores = [float(row["score"]) for row in csv.DictReader(fh)]
        assert all(s == 0.0 or s >= 0.5 for s in scores)

    def test_redump_byte_identical(self, toy_config_path, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["oracle-dump", "--config", str(toy_config_path), "--out", str(a)])
        main(["oracle-dump", "--config", str(toy_config_path), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_space_too_large(self, toy_config_path, tmp_path, capsys):
        code = main(["oracle-dump", "--config", str(toy_config_path),
                     "--out", str(tmp_path / "x.csv"),
                     "--set", "oracle.length=14"])
        assert code == EXIT_RUNTIME


def write_rounds(path: Path, rows: list[list[float]]) -> Path:
    from consearch.activeloop import ROUNDS_CSV_HEADER

    with open(path, "w") as fh:
        fh.write(ROUNDS_CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return path


def fake_row(rnd: int, value: float) -> list[float]:
    return [rnd, value, value, value, value, value, 2.0, 1.0, 0.01, 0.05, 0]


class TestCmdPlot:
    def test_single_seed_line(self, tmp_path):
        report = write_rounds(tmp_path / "r.csv", [fake_row(1, 0.5), fake_row(2, 0.6)])
        out = tmp_path / "plots"
        assert main(["plot", str(report), "--out", str(out)]) == EXIT_OK
        assert (out / "rounds_topk_mean.svg").exists()
        assert (out / "score_vs_diversity.svg").exists()
        assert (out / "score_vs_novelty.svg").exists()

    def test_empty_csv_errors_without_writing(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        out = tmp_path / "plots"
        assert main(["plot", str(empty), "--out", str(out)]) == EXIT_RUNTIME
        assert not (out / "rounds_topk_mean.svg").exists()

    def test_band_spans_per_round_extrema(self, tmp_path):
        rng = np.random.default_rng(0)
        paths = []
        for i in range(5):
            rows = [fake_row(r, float(rng.random())) for r in range(1, 5)]
            paths.append(write_rounds(tmp_path / f"s{i}.csv", rows))
        tables = [read_rounds_csv(p) for p in paths]
        rounds, lo, mean, hi = aggregate_metric(tables, "topk_mean")
        # independent recomputation straight from the files
        raw = np.array([[t["topk_mean"][r] for t in tables] for r in range(4)])
        np.testing.assert_array_equal(lo, raw.min(axis=1))
        np.testing.assert_array_equal(hi, raw.max(axis=1))
        np.testing.assert_allclose(mean, raw.mean(axis=1), atol=1e-15)


QUICK = [
    "--set", "rounds=1",
    "--set", "query_batch=4",
    "--set", "half_batch=2",
    "--set", "top_k=8",
    "--set", "init.size=24",
    "--set", "init.pool_size=128",
    "--set", "proxy.hidden=8",
    "--set", "proxy.max_updates=10",
    "--set", "proxy.learning_rate=1e-3",
    "--set", "policy.steps=2",
    "--set", "policy.hidden=8",
    "--set", "policy.emb_dim=4",
    "--set", "policy.layers=1",
]

QUICK_OVERRIDES = {
    "rounds": 1, "query_batch": 4, "half_batch": 2, "top_k": 8,
    "init.size": 24, "init.pool_size": 128,
    "proxy.hidden": 8, "proxy.max_updates": 10, "proxy.learning_rate": 1e-3,
    "policy.steps": 2, "policy.hidden": 8, "policy.emb_dim": 4, "policy.layers": 1,
}


class TestBench:
    def test_all_presets_build(self):
        for name in PRESET_NAMES:
            cells = preset_cells(name)
            assert len(cells) >= 1
            labels = [m for m, _ in cells]
            assert len(labels) == len(set(labels))

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            preset_cells("mystery")

    def test_single_method_single_seed_table(self, tmp_path):
        result = run_bench(
            "suffix-vs-deltacs", seeds=[0], out_dir=tmp_path / "bench",
            overrides=QUICK_OVERRIDES, methods=["suffix-0.5"],
        )
        assert len(result.cells) == 1
        assert result.summary()[0]["method"] == "suffix-0.5"
        lines = (tmp_path / "bench" / "bench.csv").read_text().splitlines()
        assert len(lines) == 2

    def test_paired_comparison_table(self, tmp_path):
        result = run_bench(
            "suffix-vs-deltacs", seeds=[0, 1], jobs=2, out_dir=tmp_path / "bench",
            overrides=QUICK_OVERRIDES,
        )
        assert len(result.cells) == 4
        methods = {c.method for c in result.cells}
        assert methods == {"deltacs-const-0.5", "suffix-0.5"}
        text = result.table_text()
        assert "deltacs-const-0.5" in text and "suffix-0.5" in text

    def test_cli_bench(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["bench", "--preset", "suffix-vs-deltacs", "--seeds", "0",
                     "--methods", "deltacs-const-0.5", "--out", str(out), *QUICK])
        assert code == EXIT_OK
        assert "deltacs-const-0.5" in capsys.readouterr().out

    def test_delta_sweep_grid_axes(self):
        labels = [m for m, _ in preset_cells("delta-sweep")]
        for delta in ("0.1", "0.2", "0.3", "0.4", "0.5"):
            assert f"deltacs-const-{delta}" in labels
        assert "delta-1" in labels

    def test_percentile_sweep_axes(self):
        labels = [m for m, _ in preset_cells("percentile-sweep")]
        for pct in ("50", "25", "10"):
            assert f"pct{pct}-deltacs" in labels


class TestOverrides:
    def test_nested_override(self):
        _, base = preset_cells("hard-nk")[0]
        out = apply_overrides(base, {"policy.steps": 7, "rounds": 2})
        assert out.policy.steps == 7
        assert out.rounds == 2
        assert base.policy.steps != 7  # original untouched
