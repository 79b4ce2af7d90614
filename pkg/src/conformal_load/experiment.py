"""Experiment orchestration: configs, the run/resplit protocol, persistence.

One experiment = one dataset, one model family, one layer kind. Per run, the
edges are split 50/10/40 (configurable) and the model is trained once; the
calibration+test pool is then re-partitioned `n_resplits` times, each time
calibrating every requested method and evaluating coverage, inefficiency and
(optionally) worst-slice coverage on the test half. Aggregates are reported
as mean and sample std over all run x resplit rows.

Everything is deterministic given (config, seed): per-run and per-resplit
random streams are derived from the master seed, and output files embed the
config hash and seed for provenance.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import conformal as cf
from .graphs import (EdgeSplit, FillMode, Graph, WeightScaler, fill_weights,
                     resplit_calib_test, split_edges)
from .metrics import covered_flags, coverage, inefficiency, worst_slice_coverage
from .models import (DiGAEModel, GAEModel, LGNNModel, LayerKind, MEAN_ONLY,
                     Propagation, TrainConfig, clamped_band, digae_inputs,
                     gae_inputs, lgnn_inputs, mc_dropout_predict,
                     mean_plus_quantiles, train)
from .nn import save_checkpoint
from .tntp import load_dataset

METHODS = ("cp", "cqr", "cp-erc", "cqr-erc", "qr")
MODELS = ("gae", "digae", "lgnn")
LAYERS = ("gcnconv", "graphconv")
FILLS = ("zero", "mean", "bootstrap")

_MEAN_METHODS = {"cp", "cp-erc"}
_TRIPLE_METHODS = {"cqr", "cqr-erc", "qr"}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str
    out_dir: str = "runs"
    methods: tuple[str, ...] = METHODS
    model: str = "gae"
    layer: str = "graphconv"
    alpha: float = 0.05
    fill_mode: str = "mean"
    n_runs: int = 10
    n_resplits: int = 100
    calib_ratio: float = 0.5
    seed: int = 0
    fractions: tuple[float, float, float] = (0.5, 0.1, 0.4)
    lr: float = 0.01
    max_epochs: int = 2000
    patience: int = 100
    hidden_dim: int = 32
    embed_dim: int = 16
    n_layers: int = 2
    dropout_rate: float = 0.2
    propagation: str = "sym"
    mc_samples: int = 1000
    erc_epsilon_grid: tuple[float, ...] = cf.EPSILON_GRID
    compute_wsc: bool = False
    wsc_vectors: int = 1000
    retrain_per_resplit: bool = False
    save_checkpoints: bool = True
    save_plot_data: bool = True

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "erc_epsilon_grid",
                           tuple(float(e) for e in self.erc_epsilon_grid))
        self.validate()

    def validate(self) -> None:
        if not self.methods:
            raise ValueError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.layer not in LAYERS:
            raise ValueError(f"unknown layer {self.layer!r}; choose from {LAYERS}")
        if self.fill_mode not in FILLS:
            raise ValueError(f"unknown fill mode {self.fill_mode!r}; choose from {FILLS}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if not 0.0 < self.calib_ratio < 1.0:
            raise ValueError("calib_ratio must be in (0, 1)")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")
        if self.propagation not in ("sym", "raw"):
            raise ValueError("propagation must be 'sym' or 'raw'")
        for name in ("n_runs", "n_resplits", "max_epochs", "patience",
                     "hidden_dim", "embed_dim", "mc_samples", "wsc_vectors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_layers < 0:
            raise ValueError("n_layers must be nonnegative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def hash(self) -> str:
        payload = dataclasses.asdict(self)
        payload.pop("out_dir")
        canon = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @staticmethod
    def from_file(path, **overrides) -> "ExperimentConfig":
        """Flat `key = value` config file; later keys win; kwargs win over file."""
        values: dict = {}
        for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {line_no}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = _parse_config_value(key, val)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig(**values)


_TUPLE_KEYS = {"methods": str, "fractions": float, "erc_epsilon_grid": float}
_BOOL_KEYS = {"compute_wsc", "retrain_per_resplit", "save_checkpoints", "save_plot_data"}
_INT_KEYS = {"n_runs", "n_resplits", "seed", "max_epochs", "patience", "hidden_dim",
             "embed_dim", "n_layers", "mc_samples", "wsc_vectors"}
_FLOAT_KEYS = {"alpha", "calib_ratio", "lr", "dropout_rate"}


def _parse_config_value(key: str, val: str):
    if key in _TUPLE_KEYS:
        conv = _TUPLE_KEYS[key]
        return tuple(conv(v.strip()) for v in val.split(",") if v.strip())
    if key in _BOOL_KEYS:
        if val.lower() in ("true", "1", "yes"):
            return True
        if val.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean for {key}: {val!r}")
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    return val


def config_to_text(config: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class ResultRow:
    run: int
    resplit: int
    dataset: str
    model: str
    method: str
    layer: str
    n_test: int
    coverage: float
    inefficiency: float
    wsc: float | None = None
    wsc_eval_marginal: float | None = None   # marginal coverage on the WSC 75% subset


@dataclass
class TableRow:
    dataset: str
    model: str
    method: str
    layer: str
    n: int
    coverage_mean: float
    coverage_std: float
    inefficiency_mean: float
    inefficiency_std: float
    wsc_mean: float | None = None
    wsc_std: float | None = None


@dataclass
class ResultsTable:
    rows: list[TableRow] = field(default_factory=list)

    def sorted_rows(self) -> list[TableRow]:
        return sorted(self.rows, key=lambda r: (r.dataset, r.model, r.method, r.layer))

    def lookup(self, method: str, model: str | None = None,
               dataset: str | None = None) -> TableRow:
        hits = [r for r in self.rows
                if r.method == method
                and (model is None or r.model == model)
                and (dataset is None or r.dataset == dataset)]
        if len(hits) != 1:
            raise KeyError(f"lookup({method}, {model}, {dataset}) matched {len(hits)} rows")
        return hits[0]


def aggregate_rows(rows: list[ResultRow]) -> ResultsTable:
    """Mean and sample std (n-1 denominator) per (dataset, model, method, layer)."""
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.dataset, row.model, row.method, row.layer), []).append(row)
    table = ResultsTable()
    for (dataset, model, method, layer), grp in groups.items():
        cov = np.array([g.coverage for g in grp])
        ineff = np.array([g.inefficiency for g in grp])
        wsc_vals = np.array([g.wsc for g in grp if g.wsc is not None], dtype=np.float64)
        table.rows.append(TableRow(
            dataset=dataset, model=model, method=method, layer=layer, n=len(grp),
            coverage_mean=float(cov.mean()),
            coverage_std=float(cov.std(ddof=1)) if len(grp) > 1 else 0.0,
            inefficiency_mean=float(ineff.mean()),
            inefficiency_std=float(ineff.std(ddof=1)) if len(grp) > 1 else 0.0,
            wsc_mean=float(wsc_vals.mean()) if wsc_vals.size else None,
            wsc_std=float(wsc_vals.std(ddof=1)) if wsc_vals.size > 1 else (
                0.0 if wsc_vals.size == 1 else None),
        ))
    return table


def render_table(table: ResultsTable, fmt: str = "csv") -> str:
    """Deterministically ordered results table as CSV or markdown."""
    if not table.rows:
        raise ValueError("cannot render an empty table")
    header = ["dataset", "model", "method", "layer", "n",
              "coverage_mean", "coverage_std", "inefficiency_mean",
              "inefficiency_std", "wsc_mean", "wsc_std"]
    rows = [
        [r.dataset, r.model, r.method, r.layer, str(r.n),
         repr(r.coverage_mean), repr(r.coverage_std),
         repr(r.inefficiency_mean), repr(r.inefficiency_std),
         "" if r.wsc_mean is None else repr(r.wsc_mean),
         "" if r.wsc_std is None else repr(r.wsc_std)]
        for r in table.sorted_rows()
    ]
    if fmt == "csv":
        return "\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n"
    if fmt == "markdown":
        out = ["| " + " | ".join(header) + " |",
               "|" + "|".join(["---"] * len(header)) + "|"]
        out += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_markdown_table(text: str) -> ResultsTable:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    cells = [[c.strip() for c in ln.strip().strip("|").split("|")] for ln in lines]
    table = ResultsTable()
    for row in cells[2:]:
        table.rows.append(TableRow(
            dataset=row[0], model=row[1], method=row[2], layer=row[3], n=int(row[4]),
            coverage_mean=float(row[5]), coverage_std=float(row[6]),
            inefficiency_mean=float(row[7]), inefficiency_std=float(row[8]),
            wsc_mean=float(row[9]) if row[9] else None,
            wsc_std=float(row[10]) if len(row) > 10 and row[10] else None,
        ))
    return table


# -- the protocol -------------------------------------------------------------


@dataclass
class RunArtifacts:
    """Everything computed once per run and reused across resplits."""

    run: int
    split: EdgeSplit
    split_seed: int
    scaler: WeightScaler
    pool_idx: np.ndarray                     # edge indices of the calib+test pool
    truth_pool: np.ndarray                   # standardized weights, pool order
    feats_pool: np.ndarray                   # [X_i || X_j] per pool edge
    mean_pool: np.ndarray | None = None
    lo_pool: np.ndarray | None = None
    hi_pool: np.ndarray | None = None
    s_mc_pool: np.ndarray | None = None
    erc_epsilon: float | None = None
    mean_all: np.ndarray | None = None       # predictions for every edge (plots)
    lo_all: np.ndarray | None = None
    hi_all: np.ndarray | None = None
    s_mc_all: np.ndarray | None = None
    training_meta: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    dataset: str
    rows: list[ResultRow]
    table: ResultsTable
    out_dir: Path
    diverged_runs: list[int] = field(default_factory=list)


def _make_model(config: ExperimentConfig, in_dim: int, objective, seed: int):
    kw = dict(
        hidden_dim=config.hidden_dim,
        n_layers=config.n_layers,
        layer_kind=LayerKind(config.layer),
        propagation=Propagation.SYM_NORMALIZED if config.propagation == "sym" else Propagation.RAW,
        dropout_rate=config.dropout_rate,
        objective=objective,
        seed=seed,
    )
    if config.model == "gae":
        return GAEModel(in_dim, embed_dim=config.embed_dim, **kw)
    if config.model == "digae":
        return DiGAEModel(in_dim, embed_dim=config.embed_dim, **kw)
    return LGNNModel(in_dim, **kw)


def _build_inputs(config: ExperimentConfig, graph: Graph, split: EdgeSplit, seed: int):
    prop = Propagation.SYM_NORMALIZED if config.propagation == "sym" else Propagation.RAW
    if config.model == "gae":
        masked = fill_weights(graph, split, FillMode(config.fill_mode), seed=seed)
        return gae_inputs(graph, prop, masked)
    if config.model == "digae":
        masked = fill_weights(graph, split, FillMode(config.fill_mode), seed=seed)
        return digae_inputs(graph, masked, prop)
    return lgnn_inputs(graph, prop)


def _edge_pair_features(graph: Graph, edge_indices) -> np.ndarray:
    pairs = graph.edge_array()[list(edge_indices)]
    return np.hstack([graph.node_features[pairs[:, 0]], graph.node_features[pairs[:, 1]]])


def _train_run_models(config: ExperimentConfig, graph: Graph, split: EdgeSplit,
                      w_std: np.ndarray, run: int, resplit_tag: int = 0):
    """Train the mean and/or triple model a run needs; returns models + meta."""
    in_dim = (2 * graph.num_features if config.model == "lgnn" else graph.num_features)
    seed_base = _derive_seed(config.seed, run, resplit_tag, 1)
    inputs = _build_inputs(config, graph, split, seed_base)
    tc = TrainConfig(lr=config.lr, max_epochs=config.max_epochs,
                     patience=config.patience, seed=seed_base)
    models: dict[str, object] = {}
    meta: dict[str, dict] = {}
    if _MEAN_METHODS & set(config.methods):
        model = _make_model(config, in_dim, MEAN_ONLY, seed=seed_base)
        log = train(model, inputs, graph, split, w_std, tc)
        models["mean"] = model
        meta["mean"] = {"epochs": log.epochs_run, "best_epoch": log.best_epoch,
                        "best_val": log.best_val}
    if _TRIPLE_METHODS & set(config.methods):
        model = _make_model(config, in_dim, mean_plus_quantiles(config.alpha),
                            seed=_derive_seed(config.seed, run, resplit_tag, 2))
        log = train(model, inputs, graph, split, w_std, tc)
        models["triple"] = model
        meta["triple"] = {"epochs": log.epochs_run, "best_epoch": log.best_epoch,
                          "best_val": log.best_val}
    return models, inputs, meta


def _predict_artifacts(config: ExperimentConfig, graph: Graph, split: EdgeSplit,
                       w_std: np.ndarray, models: dict, inputs, run: int,
                       art: RunArtifacts) -> None:
    all_idx = np.arange(graph.num_edges)
    pool_pos = {int(e): i for i, e in enumerate(art.pool_idx)}

    if "mean" in models:
        preds = models["mean"].predict(inputs, all_idx, graph.edges)["mean"]
        art.mean_all = preds
        art.mean_pool = preds[art.pool_idx]
    if "triple" in models:
        trip = models["triple"].predict(inputs, all_idx, graph.edges)
        lo, hi = clamped_band(trip["lo"], trip["hi"])
        art.lo_all, art.hi_all = lo, hi
        art.lo_pool, art.hi_pool = lo[art.pool_idx], hi[art.pool_idx]
    if "cp-erc" in config.methods:
        model = models["mean"]
        val_idx = np.array(split.val, dtype=np.int64)
        eval_idx = np.concatenate([art.pool_idx, val_idx])
        _, s_mc = mc_dropout_predict(model, inputs, eval_idx, graph.edges,
                                     k=config.mc_samples,
                                     base_seed=_derive_seed(config.seed, run, 3))
        art.s_mc_pool = s_mc[: len(art.pool_idx)]
        s_val = s_mc[len(art.pool_idx):]
        val_pred = art.mean_all[val_idx]
        art.erc_epsilon = cf.select_erc_epsilon(
            val_pred, w_std[val_idx], s_val, config.alpha, config.erc_epsilon_grid)
        full = np.zeros(graph.num_edges)
        full[eval_idx] = s_mc
        art.s_mc_all = full
    del pool_pos


def _method_intervals(method: str, art: RunArtifacts, calib_pos: np.ndarray,
                      test_pos: np.ndarray, alpha: float):
    """Calibrate on the calib positions and build intervals on the test positions."""
    truth_c = art.truth_pool[calib_pos]
    if method == "cp":
        cal = cf.conformal_quantile(cf.cp_scores(art.mean_pool[calib_pos], truth_c), alpha)
        return cf.cp_intervals(art.mean_pool[test_pos], cal)
    if method == "cqr":
        cal = cf.conformal_quantile(
            cf.cqr_scores(art.lo_pool[calib_pos], art.hi_pool[calib_pos], truth_c), alpha)
        return cf.cqr_intervals(art.lo_pool[test_pos], art.hi_pool[test_pos], cal)
    if method == "cp-erc":
        cal = cf.conformal_quantile(
            cf.cp_erc_scores(art.mean_pool[calib_pos], truth_c,
                             art.s_mc_pool[calib_pos], art.erc_epsilon), alpha)
        return cf.cp_erc_intervals(art.mean_pool[test_pos], art.s_mc_pool[test_pos],
                                   art.erc_epsilon, cal)
    if method == "cqr-erc":
        cal = cf.conformal_quantile(
            cf.cqr_erc_scores(art.lo_pool[calib_pos], art.hi_pool[calib_pos], truth_c), alpha)
        return cf.cqr_erc_intervals(art.lo_pool[test_pos], art.hi_pool[test_pos], cal)
    if method == "qr":
        return [cf.Interval(lo=float(a), hi=float(b))
                for a, b in zip(art.lo_pool[test_pos], art.hi_pool[test_pos])]
    raise ValueError(f"unknown method {method!r}")


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    dataset, graph, ingest_report = load_dataset(config.dataset_dir)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[ResultRow] = []
    diverged: list[int] = []
    run_summaries = []

    for run in range(1, config.n_runs + 1):
        split_seed = _derive_seed(config.seed, run, 0)
        split = split_edges(graph, config.fractions, config.calib_ratio, split_seed)
        scaler = WeightScaler.fit(graph.weights[list(split.train)])
        w_std = scaler.transform(graph.weights)

        art = RunArtifacts(
            run=run, split=split, split_seed=split_seed, scaler=scaler,
            pool_idx=np.array(split.calib_test, dtype=np.int64),
            truth_pool=scaler.transform(graph.weights)[list(split.calib_test)],
            feats_pool=_edge_pair_features(graph, split.calib_test),
        )

        try:
            models, inputs, meta = _train_run_models(config, graph, split, w_std, run)
            art.training_meta = meta
            _predict_artifacts(config, graph, split, w_std, models, inputs, run, art)
        except Exception as exc:  # noqa: BLE001 - divergence must not kill the sweep
            from .models import TrainingDiverged
            if isinstance(exc, TrainingDiverged):
                warnings.warn(f"run {run} diverged and is excluded: {exc}")
                diverged.append(run)
                continue
            raise

        pool_sorted = art.pool_idx  # sorted by construction
        for resplit in range(1, config.n_resplits + 1):
            if config.retrain_per_resplit and resplit > 1:
                models, inputs, meta = _train_run_models(
                    config, graph, split, w_std, run, resplit_tag=resplit)
                _predict_artifacts(config, graph, split, w_std, models, inputs, run, art)
            rs_seed = _derive_seed(config.seed, run, resplit, 7)
            rs = resplit_calib_test(graph, split, config.calib_ratio, rs_seed)
            calib_pos = np.searchsorted(pool_sorted, np.array(rs.calib, dtype=np.int64))
            test_pos = np.searchsorted(pool_sorted, np.array(rs.test, dtype=np.int64))

            for method in config.methods:
                intervals = _method_intervals(method, art, calib_pos, test_pos, config.alpha)
                truths = art.truth_pool[test_pos]
                cov = coverage(intervals, truths)
                ineff = inefficiency(intervals)
                wsc_val = wsc_marginal = None
                if config.compute_wsc:
                    flags = covered_flags(intervals, truths)
                    wsc_rng = np.random.default_rng(
                        np.random.SeedSequence([config.seed, run, resplit, 0x75c]))
                    wsc_res = worst_slice_coverage(
                        flags, art.feats_pool[test_pos], wsc_rng,
                        n_vectors=config.wsc_vectors)
                    wsc_val = wsc_res.wsc
                    wsc_marginal = wsc_res.eval_marginal
                rows.append(ResultRow(
                    run=run, resplit=resplit, dataset=dataset, model=config.model,
                    method=method, layer=config.layer, n_test=len(truths),
                    coverage=cov, inefficiency=ineff, wsc=wsc_val,
                    wsc_eval_marginal=wsc_marginal))

            if resplit == 1:
                if config.save_plot_data:
                    text = emit_plot_data(config, graph, art, rs)
                    (out_dir / f"edges_{run}.csv").write_text(text, encoding="utf-8")
                if config.save_checkpoints:
                    _save_run_checkpoints(out_dir, config, models, art, run)

        run_summaries.append({
            "run": run, "split_seed": split_seed,
            "scaler_mean": scaler.mean, "scaler_std": scaler.std,
            "erc_epsilon": art.erc_epsilon, "training": art.training_meta,
        })

    table = aggregate_rows(rows)
    _persist(out_dir, config, dataset, ingest_report, rows, table, run_summaries, diverged)
    return ExperimentResult(config=config, dataset=dataset, rows=rows, table=table,
                            out_dir=out_dir, diverged_runs=diverged)


# -- persistence ----------------------------------------------------------------


def _provenance_line(config: ExperimentConfig) -> str:
    return f"# config_hash={config.hash()} seed={config.seed}\n"


def _persist(out_dir: Path, config: ExperimentConfig, dataset: str, ingest_report,
             rows: list[ResultRow], table: ResultsTable, run_summaries, diverged) -> None:
    header = ["run", "resplit", "dataset", "model", "method", "layer",
              "n_test", "coverage", "inefficiency", "wsc", "wsc_eval_marginal"]
    lines = [_provenance_line(config).rstrip("\n"), ",".join(header)]
    for r in rows:
        lines.append(",".join([
            str(r.run), str(r.resplit), r.dataset, r.model, r.method, r.layer,
            str(r.n_test), repr(r.coverage), repr(r.inefficiency),
            "" if r.wsc is None else repr(r.wsc),
            "" if r.wsc_eval_marginal is None else repr(r.wsc_eval_marginal)]))
    (out_dir / "results.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    (out_dir / "table.csv").write_text(
        _provenance_line(config) + render_table(table, "csv"), encoding="utf-8")
    (out_dir / "table.md").write_text(render_table(table, "markdown"), encoding="utf-8")
    (out_dir / "config.txt").write_text(config_to_text(config), encoding="utf-8")

    summary = {
        "config": dataclasses.asdict(config),
        "config_hash": config.hash(),
        "seed": config.seed,
        "dataset": dataset,
        "ingest": {
            "kept_nodes": ingest_report.kept_nodes,
            "kept_edges": ingest_report.kept_edges,
            "dropped_zero_flow": ingest_report.dropped_zero_flow,
            "dropped_isolated_nodes": ingest_report.dropped_isolated_nodes,
        },
        "diverged_runs": diverged,
        "runs": run_summaries,
        "aggregates": [dataclasses.asdict(r) for r in table.sorted_rows()],
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")


PLOT_COLUMNS = ("src", "tgt", "src_x", "src_y", "tgt_x", "tgt_y", "split",
                "pred_std", "lo_std", "hi_std", "width_std",
                "pred_raw", "lo_raw", "hi_raw", "width_raw")


def emit_plot_data(config: ExperimentConfig, graph: Graph,
                   art: RunArtifacts, rs: EdgeSplit) -> str:
    """Per-edge CSV for map rendering: predictions, intervals, memberships.

    Intervals on train/val edges reuse the first resplit's calibration
    threshold, so every edge gets a width; membership tells readers which
    edges the threshold was actually validated on. Widths are reported in
    standardized and raw volume units.
    """
    method = config.methods[0]
    alpha = config.alpha
    pool_sorted = art.pool_idx
    calib_pos = np.searchsorted(pool_sorted, np.array(rs.calib, dtype=np.int64))

    n_e = graph.num_edges
    if method in _MEAN_METHODS and art.mean_all is None:
        raise ValueError("mean model predictions missing")
    if method in _TRIPLE_METHODS and art.lo_all is None:
        raise ValueError("triple model predictions missing")

    all_art = RunArtifacts(
        run=art.run, split=art.split, split_seed=art.split_seed, scaler=art.scaler,
        pool_idx=np.arange(n_e), truth_pool=np.zeros(n_e), feats_pool=np.zeros((n_e, 1)),
        mean_pool=art.mean_all, lo_pool=art.lo_all, hi_pool=art.hi_all,
        s_mc_pool=art.s_mc_all, erc_epsilon=art.erc_epsilon)
    # calibrate on the true calib edges, then extend interval construction to all
    sub = RunArtifacts(
        run=art.run, split=art.split, split_seed=art.split_seed, scaler=art.scaler,
        pool_idx=art.pool_idx, truth_pool=art.truth_pool, feats_pool=art.feats_pool,
        mean_pool=art.mean_pool, lo_pool=art.lo_pool, hi_pool=art.hi_pool,
        s_mc_pool=art.s_mc_pool, erc_epsilon=art.erc_epsilon)
    truth_c = sub.truth_pool[calib_pos]
    if method == "qr":
        intervals = _method_intervals("qr", all_art, np.arange(0), np.arange(n_e), alpha)
    else:
        cal = _calibration_for(method, sub, calib_pos, truth_c, alpha)
        intervals = _intervals_for(method, all_art, np.arange(n_e), cal)

    membership = np.empty(n_e, dtype=object)
    for name, idx in (("train", art.split.train), ("val", art.split.val),
                      ("calib", rs.calib), ("test", rs.test)):
        for i in idx:
            membership[i] = name

    scaler = art.scaler
    pred_std = all_art.mean_pool if method in _MEAN_METHODS else 0.5 * (all_art.lo_pool + all_art.hi_pool)
    lines = [_provenance_line(config).rstrip("\n"), ",".join(PLOT_COLUMNS)]
    for e in range(n_e):
        s, t = graph.edges[e]
        iv = intervals[e]
        lines.append(",".join([
            str(s), str(t),
            repr(float(graph.node_features[s][0])), repr(float(graph.node_features[s][1])),
            repr(float(graph.node_features[t][0])), repr(float(graph.node_features[t][1])),
            membership[e],
            repr(float(pred_std[e])), repr(iv.lo), repr(iv.hi), repr(iv.width),
            repr(float(scaler.inverse(pred_std[e]))),
            repr(float(scaler.inverse(iv.lo))), repr(float(scaler.inverse(iv.hi))),
            repr(iv.width * scaler.std),
        ]))
    return "\n".join(lines) + "\n"


def _calibration_for(method: str, art: RunArtifacts, calib_pos, truth_c, alpha):
    if method == "cp":
        return cf.conformal_quantile(cf.cp_scores(art.mean_pool[calib_pos], truth_c), alpha)
    if method == "cqr":
        return cf.conformal_quantile(
            cf.cqr_scores(art.lo_pool[calib_pos], art.hi_pool[calib_pos], truth_c), alpha)
    if method == "cp-erc":
        return cf.conformal_quantile(
            cf.cp_erc_scores(art.mean_pool[calib_pos], truth_c,
                             art.s_mc_pool[calib_pos], art.erc_epsilon), alpha)
    if method == "cqr-erc":
        return cf.conformal_quantile(
            cf.cqr_erc_scores(art.lo_pool[calib_pos], art.hi_pool[calib_pos], truth_c), alpha)
    raise ValueError(method)


def _intervals_for(method: str, art: RunArtifacts, pos, cal):
    if method == "cp":
        return cf.cp_intervals(art.mean_pool[pos], cal)
    if method == "cqr":
        return cf.cqr_intervals(art.lo_pool[pos], art.hi_pool[pos], cal)
    if method == "cp-erc":
        return cf.cp_erc_intervals(art.mean_pool[pos], art.s_mc_pool[pos],
                                   art.erc_epsilon, cal)
    if method == "cqr-erc":
        return cf.cqr_erc_intervals(art.lo_pool[pos], art.hi_pool[pos], cal)
    raise ValueError(method)


def _save_run_checkpoints(out_dir: Path, config: ExperimentConfig,
                          models: dict, art: RunArtifacts, run: int) -> None:
    for kind, model in models.items():
        meta = {
            "run": art.run, "kind": kind, "model": config.model,
            "layer": config.layer, "config_hash": config.hash(),
            "split_seed": art.split_seed,
            "scaler_mean": art.scaler.mean, "scaler_std": art.scaler.std,
        }
        save_checkpoint(out_dir / f"checkpoint_run{run}_{kind}.json",
                        model.params(), meta)


def regenerate_plot_data(run_dir) -> list[Path]:
    """Rebuild the per-edge CSVs of a completed run directory from its checkpoints."""
    from .nn import load_checkpoint, restore_params

    run_dir = Path(run_dir)
    config = ExperimentConfig.from_file(run_dir / "config.txt")
    dataset, graph, _ = load_dataset(config.dataset_dir)
    written: list[Path] = []

    for run in range(1, config.n_runs + 1):
        ckpts = {}
        for kind in ("mean", "triple"):
            path = run_dir / f"checkpoint_run{run}_{kind}.json"
            if path.exists():
                ckpts[kind] = load_checkpoint(path)
        if not ckpts:
            continue
        meta = next(iter(ckpts.values()))[1]
        split_seed = int(meta["split_seed"])
        split = split_edges(graph, config.fractions, config.calib_ratio, split_seed)
        scaler = WeightScaler(mean=float(meta["scaler_mean"]), std=float(meta["scaler_std"]))
        w_std = scaler.transform(graph.weights)

        in_dim = 2 * graph.num_features if config.model == "lgnn" else graph.num_features
        seed_base = _derive_seed(config.seed, run, 0, 1)
        inputs = _build_inputs(config, graph, split, seed_base)
        models = {}
        for kind, (state, _) in ckpts.items():
            objective = MEAN_ONLY if kind == "mean" else mean_plus_quantiles(config.alpha)
            seed = seed_base if kind == "mean" else _derive_seed(config.seed, run, 0, 2)
            model = _make_model(config, in_dim, objective, seed=seed)
            restore_params(model.params(), state)
            models[kind] = model

        art = RunArtifacts(
            run=run, split=split, split_seed=split_seed, scaler=scaler,
            pool_idx=np.array(split.calib_test, dtype=np.int64),
            truth_pool=w_std[list(split.calib_test)],
            feats_pool=_edge_pair_features(graph, split.calib_test),
        )
        _predict_artifacts(config, graph, split, w_std, models, inputs, run, art)
        rs = resplit_calib_test(graph, split, config.calib_ratio,
                                _derive_seed(config.seed, run, 1, 7))
        text = emit_plot_data(config, graph, art, rs)
        path = run_dir / f"edges_{run}.csv"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
