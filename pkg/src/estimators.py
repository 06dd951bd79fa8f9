"""
TTE estimators
Restricted difference-in-means and matched estimators on isolated-set data,
naive difference-in-means, Bernoulli-design Horvitz-Thompson and Hájek, and
the conditional-variance formula used as an exact check.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.assignment import Assignment
from src.graph import DirectedGraph
from src.isolation import IsolatedSet

logger = logging.getLogger(__name__)

ESTIMATORS = ("rdim", "rmat", "dim", "ht", "hajek")


class EstimationError(ValueError):
    """Estimator undefined for the realized assignment"""


@dataclass(frozen=True, eq=False)
class EstimateInput:
    """Observed outcomes under one realized assignment"""
    y: np.ndarray
    assignment: Assignment
    graph: DirectedGraph
    p: Optional[float] = None

    def __post_init__(self):
        if len(self.y) != self.graph.n or self.assignment.n != self.graph.n:
            raise EstimationError("outcomes, assignment and graph disagree on the number of units")


@dataclass(frozen=True)
class IsolatedView:
    """Outcomes of isolated units only, split by arm, with the strata"""
    s1: Tuple[int, ...]
    s0: Tuple[int, ...]
    outcomes: Dict[int, float]
    strata: Optional[Tuple[Tuple[int, ...], ...]] = None

    @classmethod
    def from_input(cls, data: EstimateInput) -> "IsolatedView":
        a = data.assignment
        members = a.s1 + a.s0
        return cls(s1=a.s1, s0=a.s0,
                   outcomes={i: float(data.y[i]) for i in members},
                   strata=a.strata)

    def arm(self, units: Sequence[int]) -> np.ndarray:
        return np.array([self.outcomes[i] for i in units], dtype=np.float64)


def rdim(data: EstimateInput) -> float:
    """Mean outcome over S₁ minus mean outcome over S₀"""
    view = IsolatedView.from_input(data)
    if not view.s1 or not view.s0:
        raise EstimationError(f"restricted difference-in-means needs both arms (|S1|={len(view.s1)}, |S0|={len(view.s0)})")
    return float(view.arm(view.s1).mean() - view.arm(view.s0).mean())


def rmat(data: EstimateInput) -> float:
    """Σ_k (n_k/|S|) τ̂_k with τ̂_k = treated outcome - mean control outcome in stratum k"""
    view = IsolatedView.from_input(data)
    if not view.strata:
        raise EstimationError("matched estimator needs a stratified (matched-pairs) assignment")
    treated = set(view.s1)
    size = sum(len(block) for block in view.strata)
    total = 0.0
    for block in view.strata:
        arms = [i for i in block if i in treated]
        if len(arms) != 1:
            raise EstimationError(f"stratum {block} has {len(arms)} treated units, expected 1")
        controls = [i for i in block if i not in treated]
        effect = view.outcomes[arms[0]] - float(view.arm(controls).mean())
        total += len(block) / size * effect
    return float(total)


def naive_dim(data: EstimateInput) -> float:
    """Difference in mean outcomes between Z=1 and Z=0 over all units"""
    z = data.assignment.z.astype(bool)
    if z.all() or not z.any():
        raise EstimationError("naive difference-in-means needs both treatment groups")
    y = np.asarray(data.y, dtype=np.float64)
    return float(y[z].mean() - y[~z].mean())


def _bernoulli_p(data: EstimateInput, p: Optional[float]) -> float:
    value = p if p is not None else (data.p if data.p is not None else data.assignment.p)
    if value is None or not 0.0 < value < 1.0:
        raise EstimationError(f"Bernoulli probability must lie in (0, 1), got {value}")
    return float(value)


def exposure_weights(data: EstimateInput, p: float) -> Tuple[np.ndarray, np.ndarray]:
    """E¹_i/π¹_i and E⁰_i/π⁰_i for full-treatment / full-control exposure of Ĩ_i"""
    g = data.graph
    z = data.assignment.z.astype(np.int64)
    treated = z + g.adjacency.T @ z
    size = g.closed_in_sizes()
    full = (treated == size).astype(np.float64)
    none = (treated == 0).astype(np.float64)
    return full / p ** size, none / (1.0 - p) ** size


def ber_ht(data: EstimateInput, p: Optional[float] = None) -> float:
    """Horvitz-Thompson TTE estimate under Bernoulli(p)"""
    p = _bernoulli_p(data, p)
    weight1, weight0 = exposure_weights(data, p)
    y = np.asarray(data.y, dtype=np.float64)
    return float((y @ weight1 - y @ weight0) / data.graph.n)


@dataclass(frozen=True)
class HajekResult:
    estimate: float
    treated_empty: bool
    control_empty: bool


def ber_hajek_detail(data: EstimateInput, p: Optional[float] = None) -> HajekResult:
    """Hájek estimate; an arm with no exposed unit contributes 0 and is flagged"""
    p = _bernoulli_p(data, p)
    weight1, weight0 = exposure_weights(data, p)
    y = np.asarray(data.y, dtype=np.float64)
    norm1, norm0 = weight1.sum(), weight0.sum()
    mean1 = y @ weight1 / norm1 if norm1 > 0 else 0.0
    mean0 = y @ weight0 / norm0 if norm0 > 0 else 0.0
    result = HajekResult(float(mean1 - mean0), treated_empty=norm1 == 0, control_empty=norm0 == 0)
    if result.treated_empty or result.control_empty:
        logger.warning(f"Hájek estimate has an empty exposure arm "
                       f"(treated_empty={result.treated_empty}, control_empty={result.control_empty})")
    return result


def ber_hajek(data: EstimateInput, p: Optional[float] = None) -> float:
    return ber_hajek_detail(data, p).estimate


_DISPATCH = {
    "rdim": rdim,
    "rmat": rmat,
    "dim": naive_dim,
    "ht": ber_ht,
    "hajek": ber_hajek,
}


def estimate(estimator_id: str, data: EstimateInput) -> float:
    """Run an estimator by id"""
    try:
        estimator = _DISPATCH[estimator_id]
    except KeyError:
        raise EstimationError(f"Unknown estimator '{estimator_id}'; expected one of {', '.join(ESTIMATORS)}")
    return estimator(data)


def neyman_conditional_variance(s: IsolatedSet, potential: Tuple[np.ndarray, np.ndarray],
                                n_treated: Optional[int] = None) -> float:
    """
    Var(rdim | S) under complete randomization of S:
    V²(1)/|S₁| + V²(0)/|S₀| - V²(τ)/|S|, sample variances over all of S.
    """
    members = list(s.members)
    if len(members) < 2:
        raise EstimationError(f"conditional variance needs |S| >= 2, got {len(members)}")
    n1 = len(members) // 2 if n_treated is None else int(n_treated)
    n0 = len(members) - n1
    if n1 < 1 or n0 < 1:
        raise EstimationError("both arms must be nonempty")
    y1 = np.asarray(potential[0], dtype=np.float64)[members]
    y0 = np.asarray(potential[1], dtype=np.float64)[members]
    return float(y1.var(ddof=1) / n1 + y0.var(ddof=1) / n0 - (y1 - y0).var(ddof=1) / len(members))


def mse_decomposition(estimates: Sequence[float], tau_s: Sequence[float], tau: float) -> Dict[str, float]:
    """
    Split replication MSE into the isolated-set part mean((τ_S - τ)²), the
    within-set part mean((τ̂ - τ_S)²) and their cross term.
    """
    est = np.asarray(estimates, dtype=np.float64)
    sub = np.asarray(tau_s, dtype=np.float64)
    if est.shape != sub.shape or est.size == 0:
        raise EstimationError("estimates and subset effects must be nonempty and aligned")
    return {
        "mse": float(np.mean((est - tau) ** 2)),
        "mse_tau_s": float(np.mean((sub - tau) ** 2)),
        "within_set": float(np.mean((est - sub) ** 2)),
        "cross": float(2.0 * np.mean((est - sub) * (sub - tau))),
    }
