"""Round-based active learning: proxy fit, policy training, oracle queries.

Each round retrains the proxy ensemble from scratch on the accumulated
dataset, trains the policy against acquisition rewards with the
conservative sampler, then queries the oracle with a fresh batch and
appends the labeled results. All randomness derives from per-round
streams spawned off the master seed, so a run is fully determined by its
config, and any round can be replayed from its snapshot.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path


import numpy as np

from .deltacs import DeltaCSSampler, DeltaSchedule, SuffixSampler
from .gfnpolicy import PolicyModel, PolicyTrainConfig, train_policy_round
from .oracle import (
    LabeledDataset,
    HardVariant,
    LookupOracle,
    NkLandscape,
    Oracle,
    build_clustered_dataset,
    build_percentile_dataset,
    enumerate_tokens,
    pick_percentile_seed,
    random_pool,
)
from .proxy import AcquisitionConfig, EnsembleProxy, ProxyConfig
from .seqcore import (
    MetricsRecord,
    Sequence,
    Vocabulary,
    diversity,
    min_distances,
    novelty,
    seqs_to_array,
    spearman,
    top_k_stats,
)

ROUNDS_CSV_HEADER = (
    "round,topk_max,topk_median,topk_mean,query_max,query_mean,"
    "diversity,novelty,proxy_val_mse,mean_sigma,wall_ms"
)

# stream tags for per-round generators
_TAG_INIT = 0
_TAG_POLICY_INIT = 1
_TAG_PROXY = 2
_TAG_POLICY_TRAIN = 3
_TAG_QUERY = 4


class SchemaError(ValueError):
    """A config file violated the schema; the message names the key."""


@dataclass(frozen=True)
class OracleSpec:
    kind: str  # "nk" | "lookup"
    length: int = 8
    vocab_size: int = 4
    k: int = 4
    seed: int = 7
    hard_threshold: float | None = None
    csv_path: str | None = None
    default_score: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("nk", "lookup"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")


@dataclass(frozen=True)
class InitSpec:
    kind: str = "clustered"  # "clustered" | "percentile" | "csv"
    size: int = 1024
    max_radius: int = 3
    seed_percentile: float = 60.0
    pool_size: int = 5000
    percentile: float = 50.0
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("clustered", "percentile", "csv"):
            raise ValueError(f"unknown init kind {self.kind!r}")


@dataclass(frozen=True)
class PolicySpec:
    emb_dim: int = 64
    hidden: int = 512
    layers: int = 2
    steps: int = 5000
    learning_rate: float = 5e-4
    logz_learning_rate: float = 1e-3
    objective: str = "tb"
    offline_rewards: str = "acquisition"

    def __post_init__(self) -> None:
        if self.objective not in ("tb", "vargrad"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.offline_rewards not in ("acquisition", "label"):
            raise ValueError(f"unknown offline reward source {self.offline_rewards!r}")


@dataclass(frozen=True)
class SamplerSpec:
    kind: str = "deltacs"  # "deltacs" | "suffix"
    mode: str = "adaptive"  # "constant" | "adaptive"
    delta_const: float = 0.5
    lam: float | None = None  # None: derive from round-1 uncertainty
    query_delta_const: float | None = None
    query_mode: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("deltacs", "suffix"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        for mode in (self.mode, self.query_mode):
            if mode is not None and mode not in ("constant", "adaptive"):
                raise ValueError(f"unknown sampler mode {mode!r}")
        for delta in (self.delta_const, self.query_delta_const):
            if delta is not None and not 0.0 <= delta <= 1.0:
                raise ValueError(f"delta_const must be in [0, 1], got {delta}")


@dataclass(frozen=True)
class ExperimentConfig:
    oracle: OracleSpec
    master_seed: int = 0
    rounds: int = 10
    query_batch: int = 128
    half_batch: int = 128
    top_k: int = 128
    proxy_warm_start: bool = False  # keep ensemble weights across rounds
    init: InitSpec = field(default_factory=InitSpec)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    policy: PolicySpec = field(default_factory=PolicySpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)

    def __post_init__(self) -> None:
        if self.rounds < 0:
            raise SchemaError("rounds must be nonnegative")
        for name in ("query_batch", "half_batch", "top_k"):
            if getattr(self, name) <= 0:
                raise SchemaError(f"{name} must be positive")


@dataclass(frozen=True)
class RoundLog:
    round: int
    dataset_metrics: MetricsRecord
    query_metrics: MetricsRecord
    proxy_val_mse: float
    mean_sigma: float
    wall_ms: float
    shortfall: bool = False

    def csv_row(self) -> str:
        # wall_ms is reported as 0 here so reports replay byte-identically;
        # measured timings live in the manifest.
        cells = [
            str(self.round),
            repr(self.dataset_metrics.max),
            repr(self.dataset_metrics.median),
            repr(self.dataset_metrics.mean),
            repr(self.query_metrics.max),
            repr(self.query_metrics.mean),
            repr(self.query_metrics.diversity),
            repr(self.query_metrics.novelty),
            repr(self.proxy_val_mse),
            repr(self.mean_sigma),
            "0",
        ]
        return ",".join(cells)


# -- config parsing -----------------------------------------------------------


def _check_keys(mapping: dict, allowed: set[str], prefix: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise SchemaError(f"unknown key: {prefix}{key}")


def _build_section(mapping: dict, cls, prefix: str, required: tuple[str, ...] = ()):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _check_keys(mapping, set(fields), prefix)
    for name in required:
        if name not in mapping:
            raise SchemaError(f"missing required key: {prefix}{name}")
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid section {prefix.rstrip('.')}: {exc}") from exc


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build and validate a config from a parsed key-value tree."""
    if not isinstance(mapping, dict):
        raise SchemaError("config root must be a mapping")
    mapping = dict(mapping)
    version = mapping.pop("schema_version", 1)
    if version != 1:
        raise SchemaError(f"unsupported schema_version: {version}")

    top_scalars = {"master_seed", "rounds", "query_batch", "half_batch", "top_k", "proxy_warm_start"}
    sections = {"oracle", "init", "proxy", "acquisition", "policy", "sampler"}
    _check_keys(mapping, top_scalars | sections, "")
    if "oracle" not in mapping:
        raise SchemaError("missing required key: oracle")
    oracle_map = mapping.pop("oracle")
    if not isinstance(oracle_map, dict) or "kind" not in oracle_map:
        raise SchemaError("missing required key: oracle.kind")

    kwargs: dict = {"oracle": _build_section(oracle_map, OracleSpec, "oracle.", required=("kind",))}
    for name, cls in (
        ("init", InitSpec),
        ("proxy", ProxyConfig),
        ("acquisition", AcquisitionConfig),
        ("policy", PolicySpec),
        ("sampler", SamplerSpec),
    ):
        if name in mapping:
            section = mapping.pop(name)
            if not isinstance(section, dict):
                raise SchemaError(f"section {name} must be a mapping")
            kwargs[name] = _build_section(section, cls, f"{name}.")
    kwargs.update(mapping)
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(str(exc)) from exc


def canonical_config_text(config: ExperimentConfig) -> str:
    """Key-order-independent JSON rendering of the resolved config."""
    return json.dumps(dataclasses.asdict(config), sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_config_text(config).encode()).hexdigest()


# -- construction helpers -----------------------------------------------------


def _stream(master_seed: int, round_index: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(round_index, tag)))


def _seed_int(master_seed: int, round_index: int, tag: int) -> int:
    return int(_stream(master_seed, round_index, tag).integers(0, 2**63))


def build_oracle(spec: OracleSpec) -> Oracle:
    if spec.kind == "nk":
        oracle: Oracle = NkLandscape(spec.length, spec.vocab_size, spec.k, spec.seed)
    elif spec.kind == "lookup":
        if spec.csv_path is None:
            raise SchemaError("missing required key: oracle.csv_path")
        oracle = LookupOracle.from_csv(
            spec.csv_path, Vocabulary.generic(spec.vocab_size), default=spec.default_score
        )
    else:
        raise SchemaError(f"unknown oracle kind: {spec.kind!r}")
    if spec.hard_threshold is not None:
        oracle = HardVariant(oracle, spec.hard_threshold)
    return oracle


def build_initial_dataset(config: ExperimentConfig, oracle: Oracle) -> LabeledDataset:
    spec = config.init
    rng = _stream(config.master_seed, 0, _TAG_INIT)
    if spec.kind == "clustered":
        seed_seq = pick_percentile_seed(oracle, spec.seed_percentile)
        return build_clustered_dataset(oracle, seed_seq, spec.size, spec.max_radius, rng)
    if spec.kind == "percentile":
        pool = random_pool(oracle, spec.pool_size, rng)
        return build_percentile_dataset(oracle, pool, spec.percentile)
    if spec.kind == "csv":
        if spec.path is None:
            raise SchemaError("missing required key: init.path")
        return LabeledDataset.from_csv(spec.path, oracle.vocab)
    raise SchemaError(f"unknown init kind: {spec.kind!r}")


def _build_policy(config: ExperimentConfig, oracle: Oracle) -> PolicyModel:
    ps = config.policy
    return PolicyModel(
        oracle.vocab,
        oracle.length,
        emb_dim=ps.emb_dim,
        hidden=ps.hidden,
        layers=ps.layers,
        seed=_seed_int(config.master_seed, 0, _TAG_POLICY_INIT),
    )


def _make_sampler(config, dataset, policy, proxy, lam: float, for_query: bool):
    spec = config.sampler
    mode = spec.mode
    delta_const = spec.delta_const
    if for_query:
        if spec.query_mode is not None:
            mode = spec.query_mode
        if spec.query_delta_const is not None:
            delta_const = spec.query_delta_const
    if spec.kind == "suffix":
        return SuffixSampler(dataset, policy, delta_const)
    sched = DeltaSchedule(delta_const=delta_const, lam=lam, mode=mode)
    return DeltaCSSampler(dataset, policy, proxy, sched)


# -- the loop ------------------------------------------------------------------


@dataclass
class ExperimentState:
    config: ExperimentConfig
    oracle: Oracle
    dataset: LabeledDataset
    policy: PolicyModel
    resolved_lam: float | None
    next_round: int = 1
    proxy: EnsembleProxy | None = None  # carried over only under warm start


def init_state(config: ExperimentConfig) -> ExperimentState:
    oracle = build_oracle(config.oracle)
    dataset = build_initial_dataset(config, oracle)
    policy = _build_policy(config, oracle)
    lam = config.sampler.lam
    return ExperimentState(config, oracle, dataset, policy, lam)


def _metrics_for(seqs: list[Sequence], scores: np.ndarray, k: int, d0_tokens: np.ndarray) -> MetricsRecord:
    stats = top_k_stats(scores, min(k, len(scores)))
    div = diversity(seqs) if len(seqs) >= 2 else 0.0
    nov = novelty(seqs, d0_tokens)
    return MetricsRecord(stats.max, stats.median, stats.mean, div, nov)


def _dataset_topk_metrics(dataset: LabeledDataset, k: int, d0_tokens: np.ndarray) -> MetricsRecord:
    scores = dataset.scores_array()
    k = min(k, len(dataset))
    top_idx = np.argsort(-scores, kind="stable")[:k]
    seqs = [dataset.sequences[i] for i in top_idx]
    return _metrics_for(seqs, scores[top_idx], k, d0_tokens)


def _generate_queries(
    query_sampler, dataset: LabeledDataset, b: int, rng: np.random.Generator
) -> tuple[list[Sequence], bool]:
    """Draw b unique sequences not already labeled; bounded resampling.

    Budget is 10x the batch; on exhaustion the short batch is returned
    with a flag so oracle calls are never wasted on known points.
    """
    chosen: list[Sequence] = []
    chosen_set: set[Sequence] = set()
    drawn = 0
    budget = 10 * b
    while len(chosen) < b and drawn < budget:
        need = min(b - len(chosen), budget - drawn)
        for seq in query_sampler.sample_batch(need, rng):
            if seq not in dataset and seq not in chosen_set:
                chosen.append(seq)
                chosen_set.add(seq)
        drawn += need
    shortfall = len(chosen) < b
    if shortfall:
        warnings.warn(
            f"query resampling exhausted: {len(chosen)}/{b} unique sequences", stacklevel=2
        )
    return chosen, shortfall


def run_round(state: ExperimentState, t: int) -> RoundLog:
    """Execute round t: proxy fit, policy updates, query, augment.

    Rounds are strictly sequential; the proxy restarts from scratch each
    round unless warm start is configured.
    """
    config = state.config
    started = time.perf_counter()

    if config.proxy_warm_start and state.proxy is not None:
        proxy = state.proxy
    else:
        proxy = EnsembleProxy(
            state.oracle.vocab,
            state.oracle.length,
            config.proxy,
            seed=_seed_int(config.master_seed, t, _TAG_PROXY),
        )
    report = proxy.train(state.dataset)
    state.proxy = proxy
    finite_vals = [v for v in report.final_val_mse if np.isfinite(v)]
    proxy_val = float(np.mean(finite_vals)) if finite_vals else float("nan")

    if state.resolved_lam is None:
        if config.sampler.mode == "adaptive" and config.sampler.kind == "deltacs":
            _, sigma = proxy.predict_tokens(state.dataset.tokens_array())
            mean_sigma_d = float(sigma.mean())
            state.resolved_lam = (
                1.0 / (state.oracle.length * mean_sigma_d) if mean_sigma_d > 0 else 0.0
            )
        else:
            state.resolved_lam = 0.0
    lam = state.resolved_lam

    train_sampler = _make_sampler(config, state.dataset, state.policy, proxy, lam, for_query=False)
    ptc = PolicyTrainConfig(
        steps=config.policy.steps,
        half_batch=config.half_batch,
        learning_rate=config.policy.learning_rate,
        logz_learning_rate=config.policy.logz_learning_rate,
        objective=config.policy.objective,
        offline_rewards=config.policy.offline_rewards,
        acquisition=config.acquisition,
    )
    train_policy_round(
        state.policy, proxy, state.dataset, train_sampler, ptc,
        _stream(config.master_seed, t, _TAG_POLICY_TRAIN),
    )

    query_sampler = _make_sampler(config, state.dataset, state.policy, proxy, lam, for_query=True)
    queries, shortfall = _generate_queries(
        query_sampler, state.dataset, config.query_batch,
        _stream(config.master_seed, t, _TAG_QUERY),
    )
    d0_tokens = state.dataset.initial_tokens()
    if queries:
        query_tokens = seqs_to_array(queries)
        scores = state.oracle.score_tokens(query_tokens)
        _, query_sigma = proxy.predict_tokens(query_tokens)
        state.dataset.add_batch(queries, scores, t)
        query_metrics = _metrics_for(queries, scores, min(config.top_k, len(queries)), d0_tokens)
        mean_sigma = float(query_sigma.mean())
    else:
        # every draw was already labeled (e.g. delta=0 with a frozen policy):
        # the dataset stays put and the query columns go blank
        nan = float("nan")
        query_metrics = MetricsRecord(nan, nan, nan, nan, nan)
        mean_sigma = nan

    log = RoundLog(
        round=t,
        dataset_metrics=_dataset_topk_metrics(state.dataset, config.top_k, d0_tokens),
        query_metrics=query_metrics,
        proxy_val_mse=proxy_val,
        mean_sigma=mean_sigma,
        wall_ms=(time.perf_counter() - started) * 1000.0,
        shortfall=shortfall,
    )
    state.next_round = t + 1
    return log


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    logs: list[RoundLog]
    final_dataset: LabeledDataset
    resolved_lam: float | None
    out_dir: Path | None


class _RunWriter:
    """Persists rounds.csv incrementally plus snapshots and checkpoints."""

    def __init__(self, out_dir: Path, state: ExperimentState, first_round: int = 0):
        self.out_dir = out_dir
        self.vocab = state.oracle.vocab
        (out_dir / "snapshots").mkdir(parents=True, exist_ok=True)
        (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        (out_dir / "plots").mkdir(parents=True, exist_ok=True)
        self.rounds_path = out_dir / "rounds.csv"
        self.rounds_path.write_text(ROUNDS_CSV_HEADER + "\n")
        self.snapshot(state, first_round)

    def snapshot(self, state: ExperimentState, t: int) -> None:
        state.dataset.to_csv(self.out_dir / "snapshots" / f"round_{t:03d}.csv", self.vocab)
        state.policy.save(self.out_dir / "checkpoints" / f"policy_round_{t:03d}.npz")

    def append_round(self, state: ExperimentState, log: RoundLog) -> None:
        with open(self.rounds_path, "a") as fh:
            fh.write(log.csv_row() + "\n")
        self.snapshot(state, log.round)

    def write_manifest(self, manifest: dict) -> None:
        with open(self.out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _manifest(config: ExperimentConfig, logs: list[RoundLog], state: ExperimentState,
              started_utc: str, finished_utc: str) -> dict:
    from . import __version__

    return {
        "config_hash": config_hash(config),
        "code_version": __version__,
        "master_seed": config.master_seed,
        "started_utc": started_utc,
        "finished_utc": finished_utc,
        "resolved_lambda": state.resolved_lam,
        "layout": {
            "rounds_csv": "rounds.csv",
            "snapshots": "snapshots/",
            "checkpoints": "checkpoints/",
            "plots": "plots/",
        },
        "timings_ms": [log.wall_ms for log in logs],
        "shortfall_rounds": [log.round for log in logs if log.shortfall],
    }


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run all configured rounds; optionally persist artifacts under out_dir."""
    started_utc = _utc_now()
    state = init_state(config)
    writer = _RunWriter(Path(out_dir), state) if out_dir is not None else None
    logs: list[RoundLog] = []
    try:
        for t in range(1, config.rounds + 1):
            log = run_round(state, t)
            logs.append(log)
            if writer is not None:
                writer.append_round(state, log)
    finally:
        if writer is not None:
            writer.write_manifest(_manifest(config, logs, state, started_utc, _utc_now()))
    return ExperimentResult(config, logs, state.dataset, state.resolved_lam, writer.out_dir if writer else None)


def replay_experiment(
    config: ExperimentConfig, run_dir: str | Path, from_round: int,
    out_dir: str | Path | None = None,
) -> ExperimentResult:
    """Resume a persisted run after round `from_round` and redo the rest.

    With the same config this reproduces the original rounds
    from_round+1..T exactly.
    """
    run_dir = Path(run_dir)
    oracle = build_oracle(config.oracle)
    dataset = LabeledDataset.from_csv(run_dir / "snapshots" / f"round_{from_round:03d}.csv", oracle.vocab)
    policy = _build_policy(config, oracle)
    policy.load(run_dir / "checkpoints" / f"policy_round_{from_round:03d}.npz")

    lam = config.sampler.lam
    if from_round >= 1 and lam is None:
        with open(run_dir / "manifest.json") as fh:
            lam = json.load(fh)["resolved_lambda"]
    state = ExperimentState(config, oracle, dataset, policy, lam, next_round=from_round + 1)

    writer = _RunWriter(Path(out_dir), state, first_round=from_round) if out_dir is not None else None
    logs: list[RoundLog] = []
    started_utc = _utc_now()
    try:
        for t in range(from_round + 1, config.rounds + 1):
            log = run_round(state, t)
            logs.append(log)
            if writer is not None:
                writer.append_round(state, log)
    finally:
        if writer is not None:
            writer.write_manifest(_manifest(config, logs, state, started_utc, _utc_now()))
    return ExperimentResult(config, logs, state.dataset, state.resolved_lam, writer.out_dir if writer else None)


# -- stratified correlation analysis ------------------------------------------


@dataclass(frozen=True)
class ProxyFailureRow:
    max_distance: int
    count: int
    rho: float


@dataclass(frozen=True)
class ProxyFailureResult:
    rows: tuple[ProxyFailureRow, ...]

    def table_text(self) -> str:
        lines = ["dist_max,count,spearman"]
        for row in self.rows:
            lines.append(f"{row.max_distance},{row.count},{repr(row.rho)}")
        return "\n".join(lines) + "\n"


def analyze_proxy_failure(
    config: ExperimentConfig, strata: list[int] | None = None, chunk: int = 8192
) -> ProxyFailureResult:
    """Correlation between oracle and proxy, stratified by distance to the data.

    Trains the round-1 proxy on the initial dataset, then scores the whole
    (enumerable) space and reports the rank correlation within each
    neighborhood {x : min distance to the data <= d}.
    """
    oracle = build_oracle(config.oracle)
    dataset = build_initial_dataset(config, oracle)
    proxy = EnsembleProxy(
        oracle.vocab, oracle.length, config.proxy,
        seed=_seed_int(config.master_seed, 1, _TAG_PROXY),
    )
    proxy.train(dataset)

    tokens, truth = enumerate_tokens(oracle)
    mu = np.empty(tokens.shape[0])
    for start in range(0, tokens.shape[0], chunk):
        mu[start : start + chunk] = proxy.predict_tokens(tokens[start : start + chunk])[0]
    dists = min_distances(tokens, dataset.tokens_array())

    if strata is None:
        strata = [0, 1, 2, oracle.length]
    elif oracle.length not in strata:
        strata = list(strata) + [oracle.length]
    rows = []
    for d in strata:
        sel = dists <= d
        rows.append(ProxyFailureRow(d, int(sel.sum()), spearman(truth[sel], mu[sel])))
    return ProxyFailureResult(tuple(rows))
