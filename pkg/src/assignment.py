"""
Treatment assignment mechanisms
Cluster-level complete randomization and matched-pairs randomization over an
isolated set, and Bernoulli assignment for the baseline designs.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.graph import DirectedGraph
from src.isolation import IsolatedSet, RandomSource, resolve_rng

logger = logging.getLogger(__name__)

DESIGNS = ("cr", "mpr", "bernoulli")
ARMS = ("treated_isolated", "control_isolated", "spillover", "background")


class AssignmentError(ValueError):
    """No valid assignment for the requested design"""


@dataclass(frozen=True, eq=False)
class Assignment:
    """Realized treatment vector with its isolated-set split"""
    z: np.ndarray
    members: Tuple[int, ...] = ()
    s1: Tuple[int, ...] = ()
    s0: Tuple[int, ...] = ()
    strata: Optional[Tuple[Tuple[int, ...], ...]] = None
    design: str = "cr"
    p: Optional[float] = None

    def __post_init__(self):
        z = np.array(self.z, dtype=np.int8)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return len(self.z)


def build_cluster_assignment(g: DirectedGraph, s: IsolatedSet, treated: Iterable[int],
                             design: str = "cr",
                             strata: Optional[Sequence[Sequence[int]]] = None) -> Assignment:
    """Z = 0 everywhere, then Z on Ĩ_i set to 1 for every treated isolated unit i"""
    treated = set(int(i) for i in treated)
    members = tuple(s.members)
    if not treated <= set(members):
        raise AssignmentError(f"treated units {sorted(treated - set(members))} are not in the isolated set")
    z = np.zeros(g.n, dtype=np.int8)
    for unit in treated:
        z[unit] = 1
        z[list(g.in_adj[unit])] = 1
    s1 = tuple(i for i in members if i in treated)
    s0 = tuple(i for i in members if i not in treated)
    frozen_strata = tuple(tuple(int(i) for i in block) for block in strata) if strata is not None else None
    return Assignment(z=z, members=members, s1=s1, s0=s0, strata=frozen_strata, design=design)


def cluster_complete_randomization(g: DirectedGraph, s: IsolatedSet, rng: RandomSource) -> Assignment:
    """Treat a uniformly random floor(|S|/2)-subset of S and its closed in-neighborhoods"""
    if len(s) < 2:
        raise AssignmentError(f"complete randomization needs |S| >= 2, got {len(s)}")
    generator, _ = resolve_rng(rng)
    picks = generator.permutation(len(s))[:len(s) // 2]
    treated = [s.members[k] for k in picks]
    return build_cluster_assignment(g, s, treated, design="cr")


def matched_strata(g: DirectedGraph, s: IsolatedSet) -> Tuple[Tuple[int, ...], ...]:
    """
    Sort S by in-degree descending (ties by unit index) and pair neighbors in
    that order; with odd |S| the last stratum holds three units.
    """
    if len(s) < 2:
        raise AssignmentError(f"matched pairs need |S| >= 2, got {len(s)}")
    ordered = sorted(s.members, key=lambda i: (-int(g.in_degree[i]), i))
    strata = [tuple(ordered[k:k + 2]) for k in range(0, len(ordered) - 1, 2)]
    if len(ordered) % 2:
        strata[-1] = strata[-1] + (ordered[-1],)
    return tuple(strata)


def matched_pairs_randomization(g: DirectedGraph, s: IsolatedSet, rng: RandomSource) -> Assignment:
    """Treat exactly one uniformly chosen unit in each degree-matched stratum"""
    strata = matched_strata(g, s)
    generator, _ = resolve_rng(rng)
    treated = [block[int(generator.integers(len(block)))] for block in strata]
    return build_cluster_assignment(g, s, treated, design="mpr", strata=strata)


def bernoulli_assignment(n: int, p: float, rng: RandomSource) -> Assignment:
    """Independent Bernoulli(p) treatment for every unit"""
    if not 0.0 < p < 1.0:
        raise AssignmentError(f"Bernoulli probability must lie in (0, 1), got {p}")
    generator, _ = resolve_rng(rng)
    z = (generator.random(n) < p).astype(np.int8)
    return Assignment(z=z, design="bernoulli", p=float(p))


def enumerate_cr_splits(s: IsolatedSet) -> Iterator[Tuple[int, ...]]:
    """Every floor(|S|/2)-subset of S, each an equally likely treated arm under CR"""
    return itertools.combinations(s.members, len(s) // 2)


def exposure_violations(g: DirectedGraph, a: Assignment) -> List[int]:
    """Isolated units whose closed in-neighborhood is not fully treated / fully control"""
    bad: List[int] = []
    for unit in a.s1:
        if a.z[unit] != 1 or any(a.z[j] != 1 for j in g.in_adj[unit]):
            bad.append(unit)
    for unit in a.s0:
        if a.z[unit] != 0 or any(a.z[j] != 0 for j in g.in_adj[unit]):
            bad.append(unit)
    return bad


def arm_labels(a: Assignment) -> List[str]:
    labels: List[str] = []
    s1, s0 = set(a.s1), set(a.s0)
    for unit in range(a.n):
        if unit in s1:
            labels.append("treated_isolated")
        elif unit in s0:
            labels.append("control_isolated")
        elif a.z[unit]:
            labels.append("spillover")
        else:
            labels.append("background")
    return labels


def assignment_to_csv(a: Assignment) -> str:
    frame = pd.DataFrame({"unit": np.arange(a.n), "z": a.z.astype(int), "arm": arm_labels(a)})
    return frame.to_csv(index=False, lineterminator="\n")
