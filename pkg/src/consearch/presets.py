"""Benchmark presets: named method grids over shared task configurations.

Every preset pins one task (oracle plus initial dataset) and varies the
search strategy, so per-seed comparisons are paired. Budgets are sized
for a workstation; pass overrides to shrink them further for smoke runs.
"""
from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .activeloop import (
    ExperimentConfig,
    InitSpec,
    OracleSpec,
    PolicySpec,
    RoundLog,
    SamplerSpec,
    run_experiment,
)
from .proxy import AcquisitionConfig, ProxyConfig

PRESET_NAMES = (
    "hard-nk",
    "rna-like-toy",
    "suffix-vs-deltacs",
    "delta-sweep",
    "percentile-sweep",
)


def apply_overrides(config: ExperimentConfig, overrides: dict[str, Any]) -> ExperimentConfig:
    """Replace config fields addressed by dotted keys, e.g. policy.steps."""
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        target = config
        chain = []
        for part in parts[:-1]:
            chain.append((target, part))
            target = getattr(target, part)
        replaced = dataclasses.replace(target, **{parts[-1]: value})
        for owner, name in reversed(chain):
            replaced = dataclasses.replace(owner, **{name: replaced})
        config = replaced
    return config


def _hard_nk_base() -> ExperimentConfig:
    """Rugged landscape with a thresholded floor and a clustered low-score start."""
    return ExperimentConfig(
        oracle=OracleSpec(kind="nk", length=8, vocab_size=4, k=4, seed=7, hard_threshold=0.45),
        rounds=10,
        query_batch=128,
        half_batch=64,
        top_k=128,
        init=InitSpec(kind="clustered", size=1024, max_radius=3, seed_percentile=70.0),
        proxy=ProxyConfig(hidden=256, learning_rate=1e-3, batch_size=256, max_updates=2000, patience=5),
        acquisition=AcquisitionConfig(kind="ucb", kappa=0.1),
        policy=PolicySpec(emb_dim=32, hidden=64, layers=2, steps=150, learning_rate=1e-3,
                          logz_learning_rate=1e-2),
        sampler=SamplerSpec(kind="deltacs", mode="adaptive", delta_const=0.5, lam=None),
    )


def _rna_like_base() -> ExperimentConfig:
    """Longer sequences, smoother landscape, bottom-half random start."""
    return ExperimentConfig(
        oracle=OracleSpec(kind="nk", length=14, vocab_size=4, k=2, seed=11, hard_threshold=None),
        rounds=10,
        query_batch=128,
        half_batch=64,
        top_k=128,
        init=InitSpec(kind="percentile", pool_size=5000, percentile=50.0),
        proxy=ProxyConfig(hidden=128, learning_rate=1e-3, batch_size=256, max_updates=600, patience=5),
        acquisition=AcquisitionConfig(kind="ucb", kappa=1.0),
        policy=PolicySpec(emb_dim=32, hidden=64, layers=2, steps=150, learning_rate=1e-3,
                          logz_learning_rate=1e-2),
        sampler=SamplerSpec(kind="deltacs", mode="adaptive", delta_const=0.5, lam=5.0),
    )


def _with_sampler(base: ExperimentConfig, sampler: SamplerSpec) -> ExperimentConfig:
    return dataclasses.replace(base, sampler=sampler)


def preset_cells(name: str) -> list[tuple[str, ExperimentConfig]]:
    """(method label, config) pairs for one preset; seed filled in later."""
    if name == "hard-nk":
        base = _hard_nk_base()
        return [
            ("deltacs-adaptive", base),
            ("deltacs-const-0.5", _with_sampler(base, SamplerSpec(kind="deltacs", mode="constant", delta_const=0.5, lam=0.0))),
            ("delta-1", _with_sampler(base, SamplerSpec(kind="deltacs", mode="constant", delta_const=1.0, lam=0.0))),
            ("suffix-0.5", _with_sampler(base, SamplerSpec(kind="suffix", mode="constant", delta_const=0.5, lam=0.0))),
        ]
    if name == "rna-like-toy":
        base = _rna_like_base()
        return [
            ("deltacs-adaptive", base),
            ("delta-1", _with_sampler(base, SamplerSpec(kind="deltacs", mode="constant", delta_const=1.0, lam=0.0))),
        ]
    if name == "suffix-vs-deltacs":
        base = _hard_nk_base()
        return [
            ("deltacs-const-0.5", _with_sampler(base, SamplerSpec(kind="deltacs", mode="constant", delta_const=0.5, lam=0.0))),
            ("suffix-0.5", _with_sampler(base, SamplerSpec(kind="suffix", mode="constant", delta_const=0.5, lam=0.0))),
        ]
    if name == "delta-sweep":
        base = _hard_nk_base()
        cells = [
            (
                f"deltacs-const-{delta:.1f}",
                _with_sampler(base, SamplerSpec(kind="deltacs", mode="constant", delta_const=delta, lam=0.0)),
            )
            for delta in (0.1, 0.2, 0.3, 0.4, 0.5)
        ]
        cells.append(("deltacs-adaptive", base))
        cells.append(("delta-1", _with_sampler(base, SamplerSpec(kind="deltacs", mode="constant", delta_const=1.0, lam=0.0))))
        return cells
    if name == "percentile-sweep":
        base = dataclasses.replace(
            _hard_nk_base(), init=InitSpec(kind="percentile", pool_size=4096, percentile=50.0)
        )
        cells = []
        for pct in (50.0, 25.0, 10.0):
            trunk = dataclasses.replace(base, init=InitSpec(kind="percentile", pool_size=4096, percentile=pct))
            cells.append((f"pct{pct:.0f}-deltacs", trunk))
            cells.append((
                f"pct{pct:.0f}-delta-1",
                _with_sampler(trunk, SamplerSpec(kind="deltacs", mode="constant", delta_const=1.0, lam=0.0)),
            ))
        return cells
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


@dataclass(frozen=True)
class BenchCellResult:
    method: str
    seed: int
    final: RoundLog

    def csv_row(self) -> list[str]:
        m = self.final.dataset_metrics
        q = self.final.query_metrics
        return [
            self.method, str(self.seed),
            repr(m.max), repr(m.median), repr(m.mean),
            repr(q.diversity), repr(q.novelty),
        ]


BENCH_CSV_HEADER = "method,seed,topk_max,topk_median,topk_mean,diversity,novelty"


@dataclass
class BenchResult:
    preset: str
    cells: list[BenchCellResult]

    def methods(self) -> list[str]:
        seen: list[str] = []
        for cell in self.cells:
            if cell.method not in seen:
                seen.append(cell.method)
        return seen

    def summary(self) -> list[dict[str, Any]]:
        rows = []
        for method in self.methods():
            picks = [c for c in self.cells if c.method == method]
            means = np.array([c.final.dataset_metrics.mean for c in picks])
            maxes = np.array([c.final.dataset_metrics.max for c in picks])
            divs = np.array([c.final.query_metrics.diversity for c in picks])
            novs = np.array([c.final.query_metrics.novelty for c in picks])
            rows.append({
                "method": method,
                "seeds": len(picks),
                "topk_mean": (means.mean(), means.std()),
                "topk_max": (maxes.mean(), maxes.std()),
                "diversity": (divs.mean(), divs.std()),
                "novelty": (novs.mean(), novs.std()),
            })
        return rows

    def table_text(self) -> str:
        lines = [f"preset: {self.preset}"]
        header = f"{'method':<22} {'topk_mean':>16} {'topk_max':>16} {'diversity':>16} {'novelty':>16}"
        lines.append(header)
        lines.append("-" * len(header))
        for row in self.summary():
            cells = [f"{row['method']:<22}"]
            for key in ("topk_mean", "topk_max", "diversity", "novelty"):
                mean, std = row[key]
                cells.append(f"{mean:9.4f} ~ {std:.4f}".rjust(16))
            lines.append(" ".join(cells))
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(BENCH_CSV_HEADER.split(","))
            for cell in self.cells:
                writer.writerow(cell.csv_row())


def run_bench(
    preset: str,
    seeds: list[int],
    jobs: int = 1,
    out_dir: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
    methods: list[str] | None = None,
) -> BenchResult:
    """Run the preset's method grid across seeds and gather final metrics."""
    cells = preset_cells(preset)
    if methods is not None:
        known = {m for m, _ in cells}
        unknown = [m for m in methods if m not in known]
        if unknown:
            raise ValueError(f"unknown methods for preset {preset!r}: {unknown}")
        cells = [(m, c) for m, c in cells if m in methods]
    tasks = []
    for method, base in cells:
        for seed in seeds:
            config = dataclasses.replace(base, master_seed=seed)
            if overrides:
                config = apply_overrides(config, overrides)
            cell_dir = Path(out_dir) / f"{method}-seed{seed}" if out_dir is not None else None
            tasks.append((method, seed, config, cell_dir))

    def execute(task):
        method, seed, config, cell_dir = task
        result = run_experiment(config, cell_dir)
        if not result.logs:
            raise RuntimeError(f"bench cell {method}/seed{seed} produced no rounds")
        return BenchCellResult(method, seed, result.logs[-1])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(execute, tasks))
    else:
        results = [execute(t) for t in tasks]

    bench = BenchResult(preset, results)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        bench.write_csv(Path(out_dir) / "bench.csv")
        (Path(out_dir) / "summary.txt").write_text(bench.table_text())
    return bench
