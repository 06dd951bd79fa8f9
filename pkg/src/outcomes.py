"""
Finite-population potential-outcome models
Multiplicative heterogeneous-effect model, linear cascade and threshold
contagion, each with noise drawn once and frozen, plus the TTE oracle.
"""

import io
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sps

from src.assignment import Assignment
from src.graph import DirectedGraph, laplacian_homophily_vector

logger = logging.getLogger(__name__)

MODEL_KINDS = ("ugander_mult", "linear_cascade", "contagion")
_ALIASES = {"ugander": "ugander_mult", "linear": "linear_cascade"}

DEFAULT_PARAMS: Dict[str, Dict[str, float]] = {
    "ugander_mult": {"a": 1.0, "b": 0.5, "sigma": 0.1,
                     "delta_mean": 0.5, "delta_var": 0.01,
                     "gamma_mean": 1.0, "gamma_var": 0.01},
    "linear_cascade": {"alpha": -1.0, "beta": 0.8, "gamma": 1.0, "truncation": 10},
    "contagion": {"alpha": -1.0, "beta": 1.5, "delta": 1.0, "gamma": 1.0,
                  "y0_prob": 0.5, "max_steps": 200},
}

# Sample-size study: stronger spillover, everything else unchanged.
SCALING_PRESET = {"gamma_mean": 3.0}

FROZEN_COLUMNS = ["unit", "eps", "delta", "gamma", "y0"]


class ContagionConvergenceError(RuntimeError):
    """Contagion dynamics failed to reach a fixed point"""

    def __init__(self, max_steps: int, previous: np.ndarray, last: np.ndarray):
        changed = int(np.sum(previous != last))
        super().__init__(f"contagion did not converge within {max_steps} steps ({changed} units still flipping)")
        self.previous = previous
        self.last = last


def canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in MODEL_KINDS:
        raise ValueError(f"Unknown outcome model '{kind}'; expected one of {', '.join(MODEL_KINDS)}")
    return kind


def _readonly(values: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if values is None:
        return None
    values = np.array(values)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class OutcomeModel:
    """Potential-outcome generator with frozen per-unit draws"""
    kind: str
    graph: DirectedGraph
    params: Dict[str, float]
    eps: np.ndarray
    delta: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    seed: Optional[int] = None
    _cache: Dict[str, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("eps", "delta", "gamma", "y0", "h"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.graph.n

    def in_mean_operator(self) -> sps.csr_matrix:
        """Ã with Ã_ij = A_ji / d_i; rows of zero-in-degree units stay zero"""
        def build():
            degrees = self.graph.in_degree.astype(np.float64)
            inverse = np.divide(1.0, degrees, out=np.zeros_like(degrees), where=degrees > 0)
            return (sps.diags(inverse) @ self.graph.adjacency.T.astype(np.float64)).tocsr()
        return self._cached("in_mean", build)

    def _cached(self, key: str, factory):
        if key not in self._cache:
            self._cache[key] = factory()
        return self._cache[key]


def _homophily(g: DirectedGraph) -> np.ndarray:
    if g.is_symmetric():
        return laplacian_homophily_vector(g).vector
    logger.warning(f"{g} is directed; homophily vector computed on its symmetrized version")
    symmetrized = DirectedGraph.from_adjacency(g.adjacency + g.adjacency.T)
    return laplacian_homophily_vector(symmetrized).vector


def build_model(kind: str, g: DirectedGraph, params: Optional[Dict[str, float]] = None,
                seed: Optional[int] = 0) -> OutcomeModel:
    """Draw and freeze the model's per-unit randomness from `seed`"""
    kind = canonical_kind(kind)
    merged = dict(DEFAULT_PARAMS[kind])
    if params:
        unknown = set(params) - set(merged)
        if unknown:
            raise ValueError(f"Unknown parameters for {kind}: {', '.join(sorted(unknown))}")
        merged.update({key: float(value) for key, value in params.items()})

    generator = np.random.default_rng(seed)
    n = g.n
    eps = generator.standard_normal(n)

    if kind == "ugander_mult":
        for name in ("delta_var", "gamma_var", "sigma"):
            if merged[name] < 0:
                raise ValueError(f"{name} must be nonnegative")
        delta = generator.normal(merged["delta_mean"], np.sqrt(merged["delta_var"]), n)
        gamma = generator.normal(merged["gamma_mean"], np.sqrt(merged["gamma_var"]), n)
        model = OutcomeModel(kind, g, merged, eps, delta=delta, gamma=gamma, h=_homophily(g), seed=seed)
    elif kind == "linear_cascade":
        if not abs(merged["beta"]) < 1:
            raise ValueError(f"linear cascade needs |beta| < 1, got {merged['beta']}")
        if merged["truncation"] < 0:
            raise ValueError("truncation depth must be nonnegative")
        model = OutcomeModel(kind, g, merged, eps, seed=seed)
    else:
        if int(merged["max_steps"]) < 1:
            raise ValueError("max_steps must be at least 1")
        if not 0 <= merged["y0_prob"] <= 1:
            raise ValueError("initial adoption probability must lie in [0, 1]")
        y0 = (generator.random(n) < merged["y0_prob"]).astype(np.int8)
        model = OutcomeModel(kind, g, merged, eps, y0=y0, seed=seed)

    logger.info(f"Built {kind} outcome model on {g} with seed {seed}")
    return model


def _treatment_vector(m: OutcomeModel, z: Union[Assignment, np.ndarray]) -> np.ndarray:
    values = z.z if isinstance(z, Assignment) else np.asarray(z)
    if values.shape != (m.n,):
        raise ValueError(f"treatment vector has shape {values.shape}, expected ({m.n},)")
    return values.astype(np.float64)


def _ugander_baseline(m: OutcomeModel) -> np.ndarray:
    """Y_i(0) = (a + b h_i + σ ε_i) d_i / d̄; all zero on an edgeless graph"""
    def build():
        p = m.params
        degrees = m.graph.in_degree.astype(np.float64)
        mean_degree = degrees.mean() if m.n else 0.0
        scale = degrees / mean_degree if mean_degree > 0 else np.zeros(m.n)
        return (p["a"] + p["b"] * m.h + p["sigma"] * m.eps) * scale
    return m._cached("baseline", build)


def _linear_noise(m: OutcomeModel) -> np.ndarray:
    """Σ_{j=0..J} β^j Ã^j ε"""
    def build():
        beta, depth = m.params["beta"], int(m.params["truncation"])
        operator = m.in_mean_operator()
        term = m.eps.astype(np.float64)
        total = term.copy()
        for j in range(1, depth + 1):
            term = operator @ term
            total += beta ** j * term
        return total
    return m._cached("linear_noise", build)


def evaluate(m: OutcomeModel, z: Union[Assignment, np.ndarray]) -> np.ndarray:
    """Outcome of every unit under treatment vector z"""
    treat = _treatment_vector(m, z)
    operator = m.in_mean_operator()
    p = m.params

    if m.kind == "ugander_mult":
        treated_share = operator @ treat
        return _ugander_baseline(m) * (1.0 + m.delta * treat + m.gamma * treated_share)

    if m.kind == "linear_cascade":
        beta, depth = p["beta"], int(p["truncation"])
        spread = np.zeros(m.n)
        term = treat
        for j in range(1, depth + 1):
            term = operator @ term
            spread += beta ** j * term
        return p["alpha"] / (1.0 - beta) + p["gamma"] * treat + p["gamma"] * spread + _linear_noise(m)

    drive = p["alpha"] + p["delta"] * (operator @ treat) + p["gamma"] * treat + m.eps
    max_steps = int(p["max_steps"])
    state = m.y0.astype(np.int8)
    for step in range(1, max_steps + 1):
        following = (drive + p["beta"] * (operator @ state) > 0).astype(np.int8)
        if np.array_equal(following, state):
            logger.debug(f"Contagion reached a fixed point after {step} steps")
            return following.astype(np.float64)
        previous, state = state, following
    raise ContagionConvergenceError(max_steps, previous, state)


def potential_outcomes(m: OutcomeModel) -> Tuple[np.ndarray, np.ndarray]:
    """(Y(1), Y(0)) under all-treated and all-control, cached"""
    def build():
        return evaluate(m, np.ones(m.n)), evaluate(m, np.zeros(m.n))
    return m._cached("potential", build)


def unit_effects(m: OutcomeModel) -> np.ndarray:
    """τ_i = Y_i(1) - Y_i(0)"""
    treated, control = potential_outcomes(m)
    return treated - control


def true_tte(m: OutcomeModel) -> float:
    return float(np.mean(unit_effects(m)))


def subset_tte(m: OutcomeModel, members: Iterable[int]) -> float:
    """τ_S, the mean unit effect over a subset"""
    index = list(members)
    if not index:
        raise ValueError("subset TTE of an empty set is undefined")
    return float(np.mean(unit_effects(m)[index]))


def frozen_state_to_csv(m: OutcomeModel) -> str:
    """Per-unit frozen draws; draws a model kind does not use are left empty"""
    missing = np.full(m.n, np.nan)
    frame = pd.DataFrame({
        "unit": np.arange(m.n),
        "eps": m.eps,
        "delta": m.delta if m.delta is not None else missing,
        "gamma": m.gamma if m.gamma is not None else missing,
        "y0": m.y0 if m.y0 is not None else missing,
    }, columns=FROZEN_COLUMNS)
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def model_from_frozen_csv(text: str, kind: str, g: DirectedGraph,
                          params: Optional[Dict[str, float]] = None) -> OutcomeModel:
    """Rebuild a model from an exported frozen-state table"""
    kind = canonical_kind(kind)
    frame = pd.read_csv(io.StringIO(text))
    if list(frame.columns) != FROZEN_COLUMNS:
        raise ValueError(f"expected columns {','.join(FROZEN_COLUMNS)}")
    if len(frame) != g.n or frame["unit"].tolist() != list(range(g.n)):
        raise ValueError(f"frozen state must list units 0..{g.n - 1} in order")
    merged = dict(DEFAULT_PARAMS[kind])
    merged.update(params or {})

    def column(name: str) -> Optional[np.ndarray]:
        values = frame[name].to_numpy(dtype=np.float64)
        return None if np.isnan(values).all() else values

    y0 = column("y0")
    return OutcomeModel(
        kind, g, merged, column("eps"),
        delta=column("delta") if kind == "ugander_mult" else None,
        gamma=column("gamma") if kind == "ugander_mult" else None,
        y0=y0.astype(np.int8) if kind == "contagion" and y0 is not None else None,
        h=_homophily(g) if kind == "ugander_mult" else None,
        seed=None,
    )
