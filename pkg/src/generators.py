"""
Synthetic network families for simulation studies
BA, RG, SW, ER and SBM generators plus the summary statistics used to
compare generated instances against reference tables.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import networkx as nx
import numpy as np
from scipy.optimize import brentq

from src.graph import DirectedGraph, squared_graph

logger = logging.getLogger(__name__)

MODELS = ("BA", "RG", "SW", "ER", "SBM")

# Defaults approximate the reference averages at n=1200.
RG_MEAN_DEGREE = 6.7
ER_MEAN_DEGREE = 6.9
SBM_MEAN_DEGREE = 5.3
SBM_BLOCKS = 4
SBM_OUT_RATIO = 1.0 / 20.0


def _expected_rg_degree(n: int, radius: float) -> float:
    """Mean degree of a random geometric graph in the unit square (boundary corrected)"""
    area = math.pi * radius ** 2 - 8.0 / 3.0 * radius ** 3 + radius ** 4 / 2.0
    return (n - 1) * area


def rg_radius_for_mean_degree(n: int, mean_degree: float) -> float:
    """Connection radius giving the requested expected mean degree"""
    if n < 2:
        raise ValueError("random geometric graph needs at least two units")
    ceiling = _expected_rg_degree(n, 1.0)
    if not 0 < mean_degree < ceiling:
        raise ValueError(f"mean degree must lie in (0, {ceiling:.3f}) for n={n}")
    return float(brentq(lambda r: _expected_rg_degree(n, r) - mean_degree, 1e-9, 1.0, xtol=1e-12))


def _block_sizes(n: int, blocks: int) -> List[int]:
    base, extra = divmod(n, blocks)
    return [base + (1 if b < extra else 0) for b in range(blocks)]


def sbm_probabilities(n: int, blocks: int = SBM_BLOCKS, mean_degree: float = SBM_MEAN_DEGREE,
                      out_ratio: float = SBM_OUT_RATIO) -> List[List[float]]:
    """Assortative block matrix with p_out = out_ratio * p_in tuned to a mean degree"""
    block = n / blocks
    p_in = mean_degree / ((block - 1) + (n - block) * out_ratio)
    if not 0 <= p_in <= 1:
        raise ValueError(f"mean degree {mean_degree} unreachable with {blocks} blocks at n={n}")
    p_out = p_in * out_ratio
    return [[p_in if a == b else p_out for b in range(blocks)] for a in range(blocks)]


def default_params(model: str, n: int) -> Dict[str, Any]:
    """Reference parameters for a family at size n"""
    model = model.upper()
    if model == "BA":
        return {"m": 3}
    if model == "RG":
        return {"radius": rg_radius_for_mean_degree(n, RG_MEAN_DEGREE)}
    if model == "SW":
        return {"k": 10, "beta": 0.1}
    if model == "ER":
        return {"p": ER_MEAN_DEGREE / (n - 1) if n > 1 else 0.0}
    if model == "SBM":
        return {"sizes": _block_sizes(n, SBM_BLOCKS), "probs": sbm_probabilities(n)}
    raise ValueError(f"Unknown network model '{model}'; expected one of {', '.join(MODELS)}")


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def generate(model: str, n: int, params: Optional[Dict[str, Any]] = None, seed: int = 0) -> DirectedGraph:
    """
    Generate an undirected network from one of the five families, stored
    symmetrically. Missing params fall back to the family defaults; the
    result is a deterministic function of (model, n, params, seed).
    """
    model = model.upper()
    if n < 1:
        raise ValueError(f"network size must be positive, got {n}")
    merged = default_params(model, n)
    if params:
        merged.update(params)
    if model == "RG" and params and "mean_degree" in params and "radius" not in params:
        merged["radius"] = rg_radius_for_mean_degree(n, float(params["mean_degree"]))

    if model == "BA":
        m = int(merged["m"])
        if not 1 <= m < n:
            raise ValueError(f"BA needs 1 <= m < n, got m={m}, n={n}")
        nx_graph = nx.barabasi_albert_graph(n, m, seed=seed)
    elif model == "RG":
        radius = float(merged["radius"])
        if not 0.0 < radius <= 1.0:
            raise ValueError(f"RG radius must lie in (0, 1], got {radius}")
        nx_graph = nx.random_geometric_graph(n, radius, seed=seed)
    elif model == "SW":
        k, beta = int(merged["k"]), float(merged["beta"])
        if k % 2 or not 0 < k < n:
            raise ValueError(f"SW ring degree must be even and in (0, n), got k={k}")
        _check_probability("SW rewiring probability", beta)
        nx_graph = nx.watts_strogatz_graph(n, k, beta, seed=seed)
    elif model == "ER":
        p = float(merged["p"])
        _check_probability("ER edge probability", p)
        nx_graph = nx.gnp_random_graph(n, p, seed=seed)
    else:
        sizes = [int(s) for s in merged["sizes"]]
        probs = [[float(x) for x in row] for row in merged["probs"]]
        if sum(sizes) != n:
            raise ValueError(f"SBM block sizes sum to {sum(sizes)}, expected {n}")
        if len(probs) != len(sizes) or any(len(row) != len(sizes) for row in probs):
            raise ValueError("SBM probability matrix must be square with one row per block")
        for row in probs:
            for value in row:
                _check_probability("SBM block probability", value)
        if not np.allclose(probs, np.transpose(probs)):
            raise ValueError("SBM probability matrix must be symmetric")
        nx_graph = nx.stochastic_block_model(sizes, probs, seed=seed)

    graph = DirectedGraph.from_undirected(n, list(nx_graph.edges()))
    logger.info(f"Generated {model} network with seed {seed}: {graph}")
    return graph


@dataclass
class NetworkSummary:
    """Basic structural statistics of an undirected network"""
    n: int
    m: int
    d_min: int
    d_max: int
    d_mean: float
    d2_max: int
    d2_mean: float
    avg_path_length: float
    diameter: int
    components: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def network_summary(g: DirectedGraph) -> NetworkSummary:
    """
    Degree, 2-order degree and path statistics. Edge count is undirected for
    symmetric graphs; path statistics use the largest connected component.
    """
    degrees = g.in_degree
    second = squared_graph(g).in_degree
    m = g.num_edges // 2 if g.is_symmetric() else g.num_edges

    nx_graph = g.to_networkx()
    undirected = nx_graph if not nx_graph.is_directed() else nx_graph.to_undirected()
    components = list(nx.connected_components(undirected))
    largest = undirected.subgraph(max(components, key=len)) if components else undirected
    if largest.number_of_nodes() > 1:
        avg_path = float(nx.average_shortest_path_length(largest))
        diameter = int(nx.diameter(largest))
    else:
        avg_path, diameter = 0.0, 0

    return NetworkSummary(
        n=g.n,
        m=int(m),
        d_min=int(degrees.min()) if g.n else 0,
        d_max=int(degrees.max()) if g.n else 0,
        d_mean=float(degrees.mean()) if g.n else 0.0,
        d2_max=int(second.max()) if g.n else 0,
        d2_mean=float(second.mean()) if g.n else 0.0,
        avg_path_length=avg_path,
        diameter=diameter,
        components=len(components),
    )
