"""
Monte Carlo experiment harness
Composes network, outcome model, design and estimator; replicates; and
reports MSE / Bias² / Var decompositions and sample-size scaling curves.
"""

import io
import logging
import math
import re
import zlib
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.assignment import (
    AssignmentError,
    bernoulli_assignment,
    cluster_complete_randomization,
    matched_pairs_randomization,
)
from src.config import ExperimentConfig
from src.estimators import EstimateInput, EstimationError, ber_hajek_detail, estimate
from src.generators import generate
from src.graph import DirectedGraph, load_edge_list
from src.isolation import WeightVector, random_isolation, resolve_weights, weighted_random_isolation
from src.outcomes import ContagionConvergenceError, OutcomeModel, build_model, evaluate, subset_tte, true_tte
from src.selection import SelectionReport, dmax_reweighting, select_weight

logger = logging.getLogger(__name__)

METHODS = ("BER+ht", "BER+hajek", "BER+dim", "RI+rdim", "RI+rmat", "AWRI+rdim", "AWRI+rmat")
REPORT_COLUMNS = ["method", "network", "model", "n", "R", "mse", "bias_sq", "var",
                  "mean_s", "mean_s1", "degenerate", "empty_arm"]

_METHOD_PATTERN = re.compile(r"^(BER|RI|AWRI|WRI\[(?P<candidate>[^\]]+)\])\+(?P<estimator>\w+)$")
_ESTIMATORS_BY_DESIGN = {"BER": ("ht", "hajek", "dim"), "ISOLATION": ("rdim", "rmat")}
_REPLICATION_ERRORS = (AssignmentError, EstimationError, ContagionConvergenceError)


@dataclass(frozen=True)
class MethodSpec:
    """Parsed 'DESIGN+estimator' id"""
    name: str
    design: str
    estimator: str
    candidate: Optional[str] = None


def parse_method(method: str) -> MethodSpec:
    match = _METHOD_PATTERN.match(method.strip())
    if not match:
        raise ValueError(f"Unknown method '{method}'")
    design = match.group(1).split("[")[0]
    estimator = match.group("estimator")
    allowed = _ESTIMATORS_BY_DESIGN["BER" if design == "BER" else "ISOLATION"]
    if estimator not in allowed:
        raise ValueError(f"Estimator '{estimator}' cannot be paired with design {design}")
    return MethodSpec(method.strip(), design, estimator, match.group("candidate"))


@dataclass(frozen=True)
class ReplicationRecord:
    index: int
    estimate: float
    tau_s: float
    s_size: int
    s1_size: int
    error: Optional[str] = None
    # Hájek only: an exposure arm had no unit and contributed 0
    empty_arm: bool = False


@dataclass
class ExperimentSummary:
    """MSE decomposition of one method over R replications"""
    method: str
    network: str
    model: str
    n: int
    R: int
    mse: float
    bias_sq: float
    var: float
    mean_s: float
    mean_s1: float
    degenerate: int
    tau: float = math.nan
    empty_arm: int = 0
    records: List[ReplicationRecord] = field(default_factory=list, repr=False)

    def row(self) -> Dict[str, object]:
        return {column: getattr(self, column) for column in REPORT_COLUMNS}


def summarize(method: str, network: str, model: str, n: int,
              records: Sequence[ReplicationRecord], tau: float) -> ExperimentSummary:
    """mse = mean(e²), bias_sq = mean(e)², var = mse - bias_sq; failed replications excluded and counted"""
    valid = [r for r in records if r.error is None]
    errors = np.array([r.estimate - tau for r in valid], dtype=np.float64)
    if errors.size:
        mse = float(np.mean(errors ** 2))
        bias_sq = float(np.mean(errors) ** 2)
        var = mse - bias_sq
        mean_s = float(np.mean([r.s_size for r in valid]))
        mean_s1 = float(np.mean([r.s1_size for r in valid]))
    else:
        mse = bias_sq = var = mean_s = mean_s1 = math.nan
    return ExperimentSummary(method, network, model, n, len(records), mse, bias_sq, var,
                             mean_s, mean_s1, len(records) - len(valid), tau,
                             empty_arm=sum(r.empty_arm for r in valid), records=list(records))


def replication_seed(seed: int, method: str, index: int) -> np.random.SeedSequence:
    """Substream of one replication, independent of method order and worker count"""
    return np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(method.encode("utf-8")), index))


@dataclass
class _Context:
    graph: DirectedGraph
    model: OutcomeModel
    config: ExperimentConfig
    weights: Dict[str, WeightVector]


_WORKER_CONTEXT: Optional[_Context] = None


def _init_worker(context: _Context) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = context


def _replicate(context: _Context, spec: MethodSpec, index: int) -> ReplicationRecord:
    config = context.config
    generator = np.random.default_rng(replication_seed(config.seed, spec.name, index))
    g, model = context.graph, context.model
    try:
        if spec.design == "BER":
            assignment = bernoulli_assignment(g.n, config.bernoulli_p, generator)
            y = evaluate(model, assignment)
            data = EstimateInput(y, assignment, g, config.bernoulli_p)
            if spec.estimator == "hajek":
                detail = ber_hajek_detail(data)
                return ReplicationRecord(index, detail.estimate, math.nan, 0, 0,
                                         empty_arm=detail.treated_empty or detail.control_empty)
            return ReplicationRecord(index, estimate(spec.estimator, data), math.nan, 0, 0)

        if spec.design == "RI":
            s = random_isolation(g, generator)
        else:
            weights = context.weights.get(spec.name)
            if weights is None:
                weights = _per_replication_weights(context, generator)
            s = weighted_random_isolation(g, weights, generator)
        if spec.estimator == "rmat":
            assignment = matched_pairs_randomization(g, s, generator)
        else:
            assignment = cluster_complete_randomization(g, s, generator)
        y = evaluate(model, assignment)
        value = estimate(spec.estimator, EstimateInput(y, assignment, g))
        return ReplicationRecord(index, value, subset_tte(model, s.members), len(s), len(assignment.s1))
    except _REPLICATION_ERRORS as e:
        logger.warning(f"{spec.name} replication {index} failed: {e}")
        return ReplicationRecord(index, math.nan, math.nan, 0, 0, error=type(e).__name__)


def _per_replication_weights(context: _Context, generator: np.random.Generator) -> WeightVector:
    """Ablation: rerun the pre-experiment selection inside each replication"""
    sel = context.config.selection
    report = select_weight(
        context.graph, sel.candidates, n_pre=sel.n_pre,
        seed=int(generator.integers(2 ** 32)), mode=sel.mode,
        l2_scale=dmax_reweighting(context.graph) if sel.dmax_reweight else 1.0,
        common_random_numbers=sel.common_random_numbers,
    )
    return report.weights


def _replicate_chunk(task: Tuple[MethodSpec, Sequence[int]]) -> List[ReplicationRecord]:
    spec, indices = task
    return [_replicate(_WORKER_CONTEXT, spec, index) for index in indices]


class ExperimentRunner:
    """
    Runs every configured method on one network / outcome-model pair.

    The network, the outcome model and the pre-experiment weight selection
    are built once and shared by all methods and replications.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config.validate()
        self.graph: Optional[DirectedGraph] = None
        self.model: Optional[OutcomeModel] = None
        self.tau: float = math.nan
        self._selection: Optional[SelectionReport] = None

    def setup(self) -> "ExperimentRunner":
        """Build the network and the frozen outcome model"""
        network = self.config.network
        if network.file:
            self.graph = load_edge_list(Path(network.file).read_text(encoding="utf-8"), directed=network.directed)
        else:
            self.graph = generate(network.model, network.n, network.params, network.seed)
        self.model = build_model(self.config.model.kind, self.graph, self.config.model.params, self.config.model.seed)
        self.tau = true_tte(self.model)
        logger.info(f"Experiment ready: {self.graph}, {self.model.kind}, TTE={self.tau:.6g}")
        return self

    @property
    def network_label(self) -> str:
        return self.config.network.label

    def selection(self) -> SelectionReport:
        """Pre-experiment weight selection, computed once per configuration"""
        if self._selection is None:
            self._require_setup()
            sel = self.config.selection
            self._selection = select_weight(
                self.graph, sel.candidates, n_pre=sel.n_pre, seed=self.config.seed,
                mode=sel.mode,
                l2_scale=dmax_reweighting(self.graph) if sel.dmax_reweight else 1.0,
                common_random_numbers=sel.common_random_numbers,
                workers=self.config.workers,
            )
        return self._selection

    def _require_setup(self) -> None:
        if self.graph is None or self.model is None:
            self.setup()

    def _weights_for(self, spec: MethodSpec) -> Dict[str, WeightVector]:
        if spec.design == "WRI":
            return {spec.name: resolve_weights(self.graph, spec.candidate)}
        if spec.design == "AWRI" and not self.config.selection.per_replication:
            return {spec.name: self.selection().weights}
        return {}

    def run_method(self, method: str) -> ExperimentSummary:
        """R replications of one method, serial or over a process pool"""
        spec = parse_method(method)
        self._require_setup()
        context = _Context(self.graph, self.model, self.config, self._weights_for(spec))
        indices = list(range(self.config.replications))

        workers = self.config.workers
        if workers > 1 and len(indices) > 1:
            chunks = [indices[k::workers] for k in range(workers) if indices[k::workers]]
            with Pool(processes=len(chunks), initializer=_init_worker, initargs=(context,)) as pool:
                parts = pool.map(_replicate_chunk, [(spec, chunk) for chunk in chunks])
            records = sorted((r for part in parts for r in part), key=lambda r: r.index)
        else:
            records = [_replicate(context, spec, index) for index in indices]

        summary = summarize(spec.name, self.network_label, self.model.kind, self.graph.n, records, self.tau)
        if summary.degenerate:
            logger.warning(f"{spec.name}: {summary.degenerate}/{summary.R} replications excluded")
        if summary.empty_arm:
            logger.warning(f"{spec.name}: {summary.empty_arm}/{summary.R} replications had an empty exposure arm")
        logger.info(f"{spec.name}: mse={summary.mse:.4g} bias_sq={summary.bias_sq:.4g} var={summary.var:.4g}")
        return summary

    def run_all(self) -> List[ExperimentSummary]:
        summaries = [self.run_method(method) for method in self.config.methods]
        self._print_summary(summaries)
        return summaries

    def _print_summary(self, summaries: Sequence[ExperimentSummary]) -> None:
        logger.info("=" * 60)
        logger.info(f"EXPERIMENT SUMMARY: {self.network_label} / {self.model.kind} / n={self.graph.n}")
        for s in sorted(summaries, key=lambda s: s.mse if not math.isnan(s.mse) else math.inf):
            logger.info(f"  {s.method:<22} MSE={s.mse:.4f}  Bias2={s.bias_sq:.4f}  Var={s.var:.4f}")
        logger.info("=" * 60)


def run_method(config: ExperimentConfig, method: str) -> ExperimentSummary:
    """One summary row for `method` under `config`"""
    return ExperimentRunner(config).setup().run_method(method)


def scaling_seed(network_seed: int, n: int) -> int:
    """Independent network seed for each grid size"""
    return int(np.random.SeedSequence(entropy=network_seed, spawn_key=(n,)).generate_state(1)[0])


def run_scaling(config: ExperimentConfig) -> List[ExperimentSummary]:
    """Regenerate the network at each grid size and run every method"""
    if not config.scaling_grid:
        raise ValueError("scaling needs a nonempty grid of network sizes")
    if config.network.file:
        raise ValueError("scaling regenerates networks and cannot use a network file")
    summaries: List[ExperimentSummary] = []
    for n in config.scaling_grid:
        sized = config.with_network_size(n, scaling_seed(config.network.seed, n))
        logger.info(f"Scaling step n={n} (network seed {sized.network.seed})")
        summaries.extend(ExperimentRunner(sized).setup().run_all())
    return summaries


def emit_report(summaries: Sequence[ExperimentSummary], fmt: str = "csv") -> str:
    """CSV with a fixed column order, or a markdown MSE/Bias²/Var table"""
    if fmt == "csv":
        frame = pd.DataFrame([s.row() for s in summaries], columns=REPORT_COLUMNS)
        return frame.to_csv(index=False, float_format="%.10g", lineterminator="\n")
    if fmt == "markdown":
        return _markdown_table(summaries)
    raise ValueError(f"Unknown report format '{fmt}'; expected csv or markdown")


def _markdown_table(summaries: Sequence[ExperimentSummary]) -> str:
    settings: List[Tuple[str, str, int]] = []
    methods: List[str] = []
    cells: Dict[Tuple[str, Tuple[str, str, int]], ExperimentSummary] = {}
    for s in summaries:
        setting = (s.network, s.model, s.n)
        if setting not in settings:
            settings.append(setting)
        if s.method not in methods:
            methods.append(s.method)
        cells[(s.method, setting)] = s

    header = ["Method"] + [f"{net} {model} n={n}" for net, model, n in settings]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines.append("| | " + " | ".join("MSE / Bias² / Var" for _ in settings) + " |")
    for method in methods:
        row = [method]
        for setting in settings:
            s = cells.get((method, setting))
            row.append(f"{s.mse:.3f} / {s.bias_sq:.3f} / {s.var:.3f}" if s else "")
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> List[ExperimentSummary]:
    """Read rows written by emit_report(fmt='csv')"""
    frame = pd.read_csv(io.StringIO(text))
    # Reports written before the empty_arm column still load with a count of 0
    if list(frame.columns) not in (REPORT_COLUMNS, REPORT_COLUMNS[:-1]):
        raise ValueError(f"expected columns {','.join(REPORT_COLUMNS)}")
    return [
        ExperimentSummary(
            method=str(row.method), network=str(row.network), model=str(row.model),
            n=int(row.n), R=int(row.R), mse=float(row.mse), bias_sq=float(row.bias_sq),
            var=float(row.var), mean_s=float(row.mean_s), mean_s1=float(row.mean_s1),
            degenerate=int(row.degenerate), empty_arm=int(getattr(row, "empty_arm", 0)),
        )
        for row in frame.itertuples(index=False)
    ]
