"""
Adaptive weight selection
The MSE surrogate of a weighting (degree-PMF mismatch of the two arms plus
inverse arm sizes), its Monte Carlo and exact evaluation, and the
pre-experiment loop that picks the best candidate weight.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.graph import DegreePMF, DirectedGraph, degree_pmf, l2_pmf_distance_sq
from src.isolation import (
    DEFAULT_CANDIDATES,
    DEFAULT_EXPONENTS,
    RandomSource,
    WeightVector,
    candidate_id,
    isolated_set_distribution,
    resolve_weights,
    weighted_random_isolation,
)

logger = logging.getLogger(__name__)

MODES = ("with_cr", "no_cr")
DEFAULT_N_PRE = 1000
BLOCK_SIZE = 1000
SENTINEL = math.inf


class SelectionError(RuntimeError):
    """No usable candidate weight"""


@dataclass(frozen=True)
class SurrogateSample:
    """One draw of the surrogate; degenerate draws carry the infinite sentinel"""
    l2_term: float
    size_term: float
    s_size: int
    degenerate: bool = False

    @property
    def value(self) -> float:
        return self.l2_term + self.size_term


DEGENERATE = SurrogateSample(SENTINEL, SENTINEL, 0, degenerate=True)


def population_pmf(g: DirectedGraph) -> DegreePMF:
    return g.cached("population_pmf", lambda: degree_pmf(g, range(g.n)))


def dmax_reweighting(g: DirectedGraph) -> float:
    """(d_max + 2)² scale for the l2 term, an ablation of the default surrogate"""
    return float((g.d_max + 2) ** 2)


def surrogate_from_split(g: DirectedGraph, s1: Sequence[int], s0: Sequence[int],
                         l2_scale: float = 1.0) -> SurrogateSample:
    """‖P_S₁ - P_G‖² + ‖P_S₀ - P_G‖² + 1/|S₁| + 1/|S₀|"""
    if not s1 or not s0:
        return SurrogateSample(SENTINEL, SENTINEL, len(s1) + len(s0), degenerate=True)
    reference = population_pmf(g)
    l2 = l2_pmf_distance_sq(degree_pmf(g, s1), reference) + l2_pmf_distance_sq(degree_pmf(g, s0), reference)
    return SurrogateSample(l2_scale * l2, 1.0 / len(s1) + 1.0 / len(s0), len(s1) + len(s0))


def surrogate_from_set(g: DirectedGraph, members: Sequence[int], l2_scale: float = 1.0) -> SurrogateSample:
    """No-split variant: ‖P_S - P_G‖² + 1/|S|"""
    if not members:
        return SurrogateSample(SENTINEL, SENTINEL, 0, degenerate=True)
    l2 = l2_pmf_distance_sq(degree_pmf(g, members), population_pmf(g))
    return SurrogateSample(l2_scale * l2, 1.0 / len(members), len(members))


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"Unknown surrogate mode '{mode}'; expected one of {', '.join(MODES)}")


def surrogate_draw(g: DirectedGraph, w: WeightVector, rng: np.random.Generator,
                   mode: str = "with_cr", l2_scale: float = 1.0) -> SurrogateSample:
    """One WRI draw (plus one complete-randomization split in with_cr mode)"""
    _check_mode(mode)
    s = weighted_random_isolation(g, w, rng)
    if mode == "no_cr":
        return surrogate_from_set(g, s.members, l2_scale)
    if len(s) < 2:
        return DEGENERATE
    picks = set(rng.permutation(len(s))[:len(s) // 2].tolist())
    s1 = [unit for k, unit in enumerate(s.members) if k in picks]
    s0 = [unit for k, unit in enumerate(s.members) if k not in picks]
    return surrogate_from_split(g, s1, s0, l2_scale)


@dataclass(frozen=True)
class SurrogateEstimate:
    """Monte Carlo mean of the surrogate for one candidate"""
    candidate: str
    mean: float
    se: float
    n_draws: int
    degenerate_draws: int
    l2_mean: float
    size_mean: float


def _substreams(seed: int, stream_key: Tuple[int, ...], n_draws: int) -> Iterable[np.random.Generator]:
    """One generator per block of draws, keyed by (seed, stream_key, block)"""
    blocks = math.ceil(n_draws / BLOCK_SIZE)
    for block in range(blocks):
        sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream_key) + (block,))
        generator = np.random.default_rng(sequence)
        for _ in range(min(BLOCK_SIZE, n_draws - block * BLOCK_SIZE)):
            yield generator


def estimate_surrogate(g: DirectedGraph, w: WeightVector, n_pre: int, rng: RandomSource,
                       mode: str = "with_cr", l2_scale: float = 1.0,
                       stream_key: Tuple[int, ...] = ()) -> SurrogateEstimate:
    """
    Mean surrogate over n_pre independent draws with its standard error.

    An integer seed splits the draws into blocks with their own substreams
    keyed by (seed, stream_key, block); a Generator is consumed sequentially.
    Any degenerate draw makes the mean and standard error infinite.
    """
    if n_pre < 1:
        raise ValueError(f"n_pre must be at least 1, got {n_pre}")
    _check_mode(mode)
    if isinstance(rng, np.random.Generator):
        generators: Iterable[np.random.Generator] = itertools.repeat(rng, n_pre)
    else:
        generators = _substreams(int(rng or 0), stream_key, n_pre)

    l2 = np.empty(n_pre)
    size = np.empty(n_pre)
    degenerate = 0
    for k, generator in enumerate(generators):
        sample = surrogate_draw(g, w, generator, mode, l2_scale)
        l2[k], size[k] = sample.l2_term, sample.size_term
        degenerate += sample.degenerate

    if degenerate:
        logger.info(f"Candidate {w.label} disqualified: {degenerate}/{n_pre} degenerate draws")
        return SurrogateEstimate(w.label, SENTINEL, SENTINEL, n_pre, degenerate, SENTINEL, SENTINEL)
    values = l2 + size
    se = float(values.std(ddof=1) / math.sqrt(n_pre)) if n_pre > 1 else 0.0
    return SurrogateEstimate(w.label, float(values.mean()), se, n_pre, 0,
                             float(l2.mean()), float(size.mean()))


def surrogate_exact(g: DirectedGraph, w: WeightVector, mode: str = "no_cr", l2_scale: float = 1.0) -> float:
    """
    Exact surrogate expectation by enumerating all WRI selection sequences
    and, in with_cr mode, all complete-randomization splits of each set.
    """
    _check_mode(mode)
    total = 0.0
    for members, prob in isolated_set_distribution(g, w).items():
        if prob <= 0:
            continue
        ordered = sorted(members)
        if mode == "no_cr":
            total += prob * surrogate_from_set(g, ordered, l2_scale).value
            continue
        if len(ordered) < 2:
            return SENTINEL
        splits = list(itertools.combinations(ordered, len(ordered) // 2))
        conditional = 0.0
        for treated in splits:
            control = [unit for unit in ordered if unit not in treated]
            conditional += surrogate_from_split(g, list(treated), control, l2_scale).value
        total += prob * conditional / len(splits)
    return float(total)


@dataclass
class SelectionReport:
    """Per-candidate surrogate means and the chosen weighting"""
    results: List[SurrogateEstimate]
    chosen_index: int
    weights: WeightVector
    mode: str = "with_cr"

    @property
    def chosen(self) -> str:
        return self.results[self.chosen_index].candidate

    def to_csv(self) -> str:
        frame = pd.DataFrame({
            "candidate": [r.candidate for r in self.results],
            "m_l": [r.mean for r in self.results],
            "se": [r.se for r in self.results],
            "n_draws": [r.n_draws for r in self.results],
            "chosen": [k == self.chosen_index for k in range(len(self.results))],
        })
        return frame.to_csv(index=False, float_format="%.10g", lineterminator="\n")


def family_candidates(family: str, exponents: Sequence[int] = DEFAULT_EXPONENTS) -> List[str]:
    """Candidate ids of a single family, e.g. for degree-only adaptive selection"""
    return [candidate_id(family, l) for l in exponents]


def _evaluate_candidate(task) -> SurrogateEstimate:
    g, weights, n_pre, seed, key, mode, l2_scale = task
    return estimate_surrogate(g, weights, n_pre, seed, mode=mode, l2_scale=l2_scale, stream_key=key)


def select_weight(g: DirectedGraph, candidates: Optional[Sequence[Union[str, WeightVector]]] = None,
                  n_pre: int = DEFAULT_N_PRE, seed: int = 0, mode: str = "with_cr",
                  l2_scale: float = 1.0, common_random_numbers: bool = False,
                  workers: int = 1) -> SelectionReport:
    """
    Evaluate every candidate's surrogate on independent substreams and pick
    the minimizer (first index on ties). Candidates run in a process pool
    when workers > 1; results do not depend on the worker count.
    """
    candidates = list(candidates) if candidates is not None else list(DEFAULT_CANDIDATES)
    if not candidates:
        raise SelectionError("at least one candidate weight is required")
    weights = [resolve_weights(g, c) for c in candidates]
    tasks = [
        (g, wv, n_pre, seed, () if common_random_numbers else (index,), mode, l2_scale)
        for index, wv in enumerate(weights)
    ]

    logger.info(f"Selecting among {len(tasks)} candidate weights with n_pre={n_pre} ({mode})")
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=min(workers, len(tasks))) as pool:
            results = pool.map(_evaluate_candidate, tasks)
    else:
        results = [_evaluate_candidate(task) for task in tasks]

    means = np.array([r.mean for r in results])
    if np.all(np.isinf(means)):
        raise SelectionError("every candidate weight produced degenerate isolated sets")
    chosen = int(np.argmin(means))
    for r in results:
        logger.debug(f"  {r.candidate}: m={r.mean:.6g} se={r.se:.3g}")
    logger.info(f"Selected weight {results[chosen].candidate} (m={results[chosen].mean:.6g})")
    return SelectionReport(results=list(results), chosen_index=chosen, weights=weights[chosen], mode=mode)
