"""
Random isolation samplers
Uniform and weighted random isolation, the Beta-key selection law, the
exact enumeration oracle for small graphs and the candidate weight
families degree^l / spectral^l.
"""

import io
import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.graph import DirectedGraph, principal_eigenvector, removal_sets, squared_graph

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-12
ENUMERATION_LIMIT = 12

FAMILIES = ("degree", "spectral")
DEFAULT_EXPONENTS = (-1, 0, 1, 2, 3, 4)
_CANDIDATE_PATTERN = re.compile(r"^\s*(degree|spectral)\s*\^\s*(-?\d+)\s*$")

RandomSource = Union[int, np.random.Generator, None]


class InvalidWeightError(ValueError):
    """Weight vector with negative, non-finite or misshapen entries"""


class EnumerationTooLargeError(ValueError):
    """Exact enumeration requested on a graph beyond the supported size"""


def resolve_rng(rng: RandomSource) -> Tuple[np.random.Generator, Optional[int]]:
    """Accept a seed or a Generator; report the seed when one was given"""
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), (int(rng) if rng is not None else None)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Per-unit sampling weights, floored at WEIGHT_FLOOR"""
    w: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        values = np.array(self.w, dtype=np.float64)
        if values.ndim != 1:
            raise InvalidWeightError(f"weights must be one-dimensional, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidWeightError("weights must be finite")
        if np.any(values < 0):
            raise InvalidWeightError("weights must be nonnegative")
        values = np.maximum(values, WEIGHT_FLOOR)
        values.setflags(write=False)
        object.__setattr__(self, "w", values)

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.ones(n), label=candidate_id("degree", 0))

    def scaled(self, factor: float) -> "WeightVector":
        if not factor > 0:
            raise InvalidWeightError(f"scale factor must be positive, got {factor}")
        return WeightVector(self.w * factor, label=self.label)

    def __len__(self) -> int:
        return len(self.w)


@dataclass(frozen=True)
class IsolatedSet:
    """Isolated units in selection order"""
    members: Tuple[int, ...]
    source_seed: Optional[int] = None

    def as_set(self) -> FrozenSet[int]:
        return frozenset(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __contains__(self, unit) -> bool:
        return unit in self.members


def _greedy_scan(g: DirectedGraph, order: Sequence[int]) -> Tuple[int, ...]:
    """Walk units in priority order, keeping each one not yet removed"""
    removal = removal_sets(g)
    removed = np.zeros(g.n, dtype=bool)
    members: List[int] = []
    for unit in order:
        if not removed[unit]:
            members.append(int(unit))
            removed[removal[unit]] = True
    return tuple(members)


def random_isolation(g: DirectedGraph, rng: RandomSource) -> IsolatedSet:
    """
    Random isolation: pick a unit uniformly from the remaining pool, add it
    to S, drop its removal set, repeat until the pool is empty.

    Scanning a uniform random permutation and keeping every unit still in the
    pool realizes exactly that sequence of uniform picks.
    """
    if g.n == 0:
        raise ValueError("random isolation needs a nonempty graph")
    generator, seed = resolve_rng(rng)
    order = generator.permutation(g.n)
    return IsolatedSet(_greedy_scan(g, order), source_seed=seed)


def beta_keys(w: np.ndarray, generator: np.random.Generator) -> np.ndarray:
    """log of X_i = U_i^(1/w_i), X_i ~ Beta(w_i, 1); U drawn in (0, 1]"""
    uniforms = 1.0 - generator.random(len(w))
    return np.log(uniforms) / w


def weighted_random_isolation(g: DirectedGraph, w: WeightVector, rng: RandomSource) -> IsolatedSet:
    """
    Weighted random isolation with Beta(w_i, 1) keys.

    Each round takes the remaining unit with the largest key, which selects
    j with probability w_j / Σ_{l in pool} w_l. Key ties go to the smaller
    unit index.
    """
    if g.n == 0:
        raise ValueError("weighted random isolation needs a nonempty graph")
    if len(w) != g.n:
        raise InvalidWeightError(f"weight vector has {len(w)} entries for a graph of {g.n} units")
    generator, seed = resolve_rng(rng)
    keys = beta_keys(w.w, generator)
    order = np.lexsort((np.arange(g.n), -keys))
    return IsolatedSet(_greedy_scan(g, order), source_seed=seed)


def beta_key_law_check(w_i: float, w_j: float, n_samples: int, rng: RandomSource) -> float:
    """Empirical P(key_i > key_j); the selection law predicts w_i / (w_i + w_j)"""
    if w_i <= 0 or w_j <= 0:
        raise InvalidWeightError("both weights must be positive")
    generator, _ = resolve_rng(rng)
    keys_i = np.log(1.0 - generator.random(n_samples)) / w_i
    keys_j = np.log(1.0 - generator.random(n_samples)) / w_j
    return float(np.mean(keys_i > keys_j))


def beta_max_samples(w_i: float, w_j: float, n_samples: int, rng: RandomSource) -> np.ndarray:
    """Samples of max(X_i, X_j), distributed Beta(w_i + w_j, 1)"""
    if w_i <= 0 or w_j <= 0:
        raise InvalidWeightError("both weights must be positive")
    generator, _ = resolve_rng(rng)
    keys_i = np.log(1.0 - generator.random(n_samples)) / w_i
    keys_j = np.log(1.0 - generator.random(n_samples)) / w_j
    return np.exp(np.maximum(keys_i, keys_j))


def check_isolation(g: DirectedGraph, s: IsolatedSet) -> List[str]:
    """Violations of disjoint closed in-neighborhoods or maximality (empty when valid)"""
    problems: List[str] = []
    owner = np.full(g.n, -1, dtype=np.int64)
    for unit in s.members:
        for member in (unit,) + g.in_adj[unit]:
            if owner[member] >= 0:
                problems.append(f"closed in-neighborhoods of {owner[member]} and {unit} share unit {member}")
            owner[member] = unit
    covered = np.zeros(g.n, dtype=bool)
    removal = removal_sets(g)
    for unit in s.members:
        covered[removal[unit]] = True
    left = np.flatnonzero(~covered)
    if left.size:
        problems.append(f"not maximal: units {left[:5].tolist()} were never removed")
    return problems


def isolated_set_distribution(g: DirectedGraph, w: Optional[WeightVector] = None) -> Dict[FrozenSet[int], float]:
    """
    Exact law of the WRI isolated set by enumerating every selection
    sequence with roulette probabilities w_j / Σ w_l. Feasible for n <= 12.
    """
    if g.n > ENUMERATION_LIMIT:
        raise EnumerationTooLargeError(f"exact enumeration supports n <= {ENUMERATION_LIMIT}, got {g.n}")
    if g.n == 0:
        raise ValueError("enumeration needs a nonempty graph")
    weights = (w or WeightVector.uniform(g.n)).w
    masks = [int(sum(1 << int(j) for j in row)) for row in removal_sets(g)]

    @lru_cache(maxsize=None)
    def law(pool: int) -> Tuple[Tuple[int, float], ...]:
        if pool == 0:
            return ((0, 1.0),)
        units = [i for i in range(g.n) if pool >> i & 1]
        total = float(sum(weights[i] for i in units))
        outcome: Dict[int, float] = defaultdict(float)
        for unit in units:
            pick = weights[unit] / total
            for rest, prob in law(pool & ~masks[unit]):
                outcome[rest | (1 << unit)] += pick * prob
        return tuple(outcome.items())

    distribution = {
        frozenset(i for i in range(g.n) if mask >> i & 1): prob
        for mask, prob in law((1 << g.n) - 1)
    }
    logger.debug(f"Enumerated {len(distribution)} isolated sets on {g}")
    return distribution


def inclusion_probabilities(g: DirectedGraph, w: Optional[WeightVector] = None) -> np.ndarray:
    """Exact P(i in S) from the enumeration oracle"""
    probs = np.zeros(g.n)
    for members, prob in isolated_set_distribution(g, w).items():
        probs[list(members)] += prob
    return probs


def empirical_inclusion(g: DirectedGraph, w: WeightVector, n_draws: int, rng: RandomSource) -> np.ndarray:
    """Monte Carlo inclusion frequencies over n_draws WRI samples"""
    generator, _ = resolve_rng(rng)
    counts = np.zeros(g.n)
    for _ in range(n_draws):
        counts[list(weighted_random_isolation(g, w, generator).members)] += 1
    return counts / n_draws


def candidate_id(family: str, exponent: int) -> str:
    return f"{family}^{int(exponent)}"


def parse_candidate(text: str) -> Tuple[str, int]:
    """'degree^-1' -> ('degree', -1)"""
    match = _CANDIDATE_PATTERN.match(text)
    if not match:
        raise InvalidWeightError(f"Unknown candidate weight '{text}'; expected degree^<l> or spectral^<l>")
    return match.group(1), int(match.group(2))


DEFAULT_CANDIDATES = tuple(candidate_id(f, l) for f in FAMILIES for l in DEFAULT_EXPONENTS)


def spectral_centrality(g: DirectedGraph) -> np.ndarray:
    """Principal eigenvector of the 2-order network, cached on g"""
    def build():
        result = principal_eigenvector(squared_graph(g))
        if not result.converged or result.degenerate:
            logger.warning(f"Spectral weight base on {g} is approximate "
                           f"(converged={result.converged}, degenerate={result.degenerate})")
        return result.vector

    return g.cached("spectral", build)


def candidate_weights(g: DirectedGraph, family: str, exponent: int) -> WeightVector:
    """
    degree^l: w_i = max(d_i, 1)^l.  spectral^l: w_i = max(v_i, 1e-12)^l with v
    the principal eigenvector of the 2-order network. l = 0 is uniform.
    """
    if family == "degree":
        base = np.maximum(g.in_degree, 1).astype(np.float64)
    elif family == "spectral":
        base = np.maximum(spectral_centrality(g), WEIGHT_FLOOR)
    else:
        raise InvalidWeightError(f"Unknown weight family '{family}'")
    with np.errstate(over="ignore"):
        values = base ** int(exponent)
    values = np.minimum(values, np.finfo(np.float64).max)
    return WeightVector(values, label=candidate_id(family, exponent))


def resolve_weights(g: DirectedGraph, candidate: Union[str, WeightVector]) -> WeightVector:
    """Candidate id or ready-made WeightVector -> WeightVector for g"""
    if isinstance(candidate, WeightVector):
        if len(candidate) != g.n:
            raise InvalidWeightError(f"weight vector has {len(candidate)} entries for {g.n} units")
        return candidate
    family, exponent = parse_candidate(candidate)
    return candidate_weights(g, family, exponent)


def weights_to_csv(w: WeightVector) -> str:
    frame = pd.DataFrame({"unit": np.arange(len(w)), "weight": w.w})
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def weights_from_csv(text: str, label: str = "file") -> WeightVector:
    """Read a `unit,weight` table; every unit 0..n-1 must appear once"""
    frame = pd.read_csv(io.StringIO(text))
    if list(frame.columns) != ["unit", "weight"]:
        raise InvalidWeightError(f"expected columns unit,weight, got {','.join(frame.columns)}")
    units = frame["unit"].to_numpy()
    if sorted(units.tolist()) != list(range(len(frame))):
        raise InvalidWeightError("weight table must list each unit 0..n-1 exactly once")
    values = np.empty(len(frame))
    values[units] = frame["weight"].to_numpy(dtype=np.float64)
    return WeightVector(values, label=label)
