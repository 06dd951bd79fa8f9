"""
Directed network representation for isolation designs
Edge-list ingestion, closed neighborhoods, degree PMFs and the spectral
helpers used by candidate weights and outcome models.
"""

import io
import logging
import re
from dataclasses import dataclass
from typing import IO, Dict, Iterable, List, Optional, Set, Tuple, Union

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, eigsh

logger = logging.getLogger(__name__)

# Below this many non-isolated units the Laplacian problem is solved densely.
DENSE_EIGEN_LIMIT = 200

_HEADER_PATTERN = re.compile(r"^#\s*n\s*=\s*(\d+)\s*$")


class EdgeListParseError(ValueError):
    """Malformed edge-list input, tagged with the offending line number"""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnitIndexError(IndexError):
    """Unit id outside 0..n-1"""


class PMFSupportError(ValueError):
    """Degree PMFs compared over different supports"""


class DirectedGraph:
    """
    Immutable directed, unweighted network G=(V, E) on units 0..n-1.

    An edge (i, j) means unit i interferes with unit j. Undirected inputs are
    stored symmetrically (both directions present) so every algorithm has a
    single directed code path. Self-loops and duplicate edges are rejected /
    collapsed at construction.
    """

    def __init__(self, n: int, edges: Union[Iterable[Tuple[int, int]], np.ndarray] = ()):
        if n < 0:
            raise ValueError(f"unit count must be nonnegative, got {n}")

        if isinstance(edges, np.ndarray):
            pairs = edges.astype(np.int64).reshape(-1, 2)
        else:
            pairs = np.asarray([(int(i), int(j)) for i, j in edges], dtype=np.int64).reshape(-1, 2)

        if pairs.shape[0]:
            if pairs.min() < 0 or pairs.max() >= n:
                bad = pairs[(pairs < 0).any(axis=1) | (pairs >= n).any(axis=1)][0]
                raise UnitIndexError(f"edge ({bad[0]}, {bad[1]}) references a unit outside 0..{n - 1}")
            loops = pairs[:, 0] == pairs[:, 1]
            if loops.any():
                raise ValueError(f"self-loop on unit {pairs[loops][0, 0]}")
            pairs = np.unique(pairs, axis=0)

        data = np.ones(pairs.shape[0], dtype=np.int64)
        adjacency = sps.csr_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        adjacency.sort_indices()

        self._n = n
        self._adjacency = adjacency
        transposed = adjacency.T.tocsr()
        transposed.sort_indices()
        self._out_adj = tuple(
            tuple(int(j) for j in adjacency.indices[adjacency.indptr[i]:adjacency.indptr[i + 1]])
            for i in range(n)
        )
        self._in_adj = tuple(
            tuple(int(j) for j in transposed.indices[transposed.indptr[i]:transposed.indptr[i + 1]])
            for i in range(n)
        )
        in_degree = np.diff(transposed.indptr).astype(np.int64)
        in_degree.setflags(write=False)
        self._in_degree = in_degree
        self._cache: Dict[str, object] = {}

    @classmethod
    def from_adjacency(cls, matrix) -> "DirectedGraph":
        """Build from any (sparse or dense) 0/1 matrix with A[i, j] = 1 for i -> j"""
        coo = sps.coo_matrix(matrix)
        keep = coo.data != 0
        pairs = np.column_stack([coo.row[keep], coo.col[keep]]).astype(np.int64)
        return cls(coo.shape[0], pairs)

    @classmethod
    def from_undirected(cls, n: int, edges: Iterable[Tuple[int, int]]) -> "DirectedGraph":
        """Mirror every listed pair so the stored graph is symmetric"""
        pairs = np.asarray([(int(i), int(j)) for i, j in edges], dtype=np.int64).reshape(-1, 2)
        return cls(n, np.vstack([pairs, pairs[:, ::-1]]))

    @classmethod
    def from_networkx(cls, nx_graph) -> "DirectedGraph":
        """Convert a networkx graph whose nodes are 0..n-1"""
        n = nx_graph.number_of_nodes()
        nodes = sorted(nx_graph.nodes())
        if nodes != list(range(n)):
            raise ValueError("networkx graph nodes must be labelled 0..n-1")
        if nx_graph.is_directed():
            return cls(n, list(nx_graph.edges()))
        return cls.from_undirected(n, list(nx_graph.edges()))

    def to_networkx(self):
        """Undirected networkx view for symmetric graphs, DiGraph otherwise"""
        import networkx as nx

        graph = nx.Graph() if self.is_symmetric() else nx.DiGraph()
        graph.add_nodes_from(range(self._n))
        graph.add_edges_from(self.edges())
        return graph

    @property
    def n(self) -> int:
        return self._n

    @property
    def out_adj(self) -> Tuple[Tuple[int, ...], ...]:
        return self._out_adj

    @property
    def in_adj(self) -> Tuple[Tuple[int, ...], ...]:
        return self._in_adj

    @property
    def in_degree(self) -> np.ndarray:
        return self._in_degree

    @property
    def adjacency(self) -> sps.csr_matrix:
        """Sparse adjacency A (treat as read-only)"""
        return self._adjacency

    @property
    def num_edges(self) -> int:
        """Number of directed edges"""
        return int(self._adjacency.nnz)

    @property
    def d_max(self) -> int:
        return int(self._in_degree.max()) if self._n else 0

    def edges(self) -> List[Tuple[int, int]]:
        coo = self._adjacency.tocoo()
        return [(int(i), int(j)) for i, j in zip(coo.row, coo.col)]

    def cached(self, key: str, factory):
        """Memoize a derived quantity on the graph (the graph itself never changes)"""
        if key not in self._cache:
            self._cache[key] = factory()
        return self._cache[key]

    def is_symmetric(self) -> bool:
        return bool(self.cached("symmetric", lambda: (self._adjacency != self._adjacency.T).nnz == 0))

    def closed_in_sizes(self) -> np.ndarray:
        """|Ĩ_i| = d_i + 1 for every unit"""
        return self._in_degree + 1

    def __repr__(self) -> str:
        kind = "undirected" if self.is_symmetric() else "directed"
        return f"DirectedGraph(n={self._n}, edges={self.num_edges}, {kind})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return self._n == other._n and (self._adjacency != other._adjacency).nnz == 0

    __hash__ = None


def _check_unit(g: DirectedGraph, i: int) -> int:
    if not 0 <= int(i) < g.n:
        raise UnitIndexError(f"unit {i} outside 0..{g.n - 1}")
    return int(i)


def _decode_lines(data: bytes) -> str:
    lines = data.split(b"\n")
    for line_no, chunk in enumerate(lines, start=1):
        try:
            lines[line_no - 1] = chunk.decode("utf-8")
        except UnicodeDecodeError as e:
            raise EdgeListParseError(line_no, f"invalid UTF-8 ({e.reason})") from e
    return "\n".join(lines)


def load_edge_list(text: Union[str, bytes, IO], directed: bool = False) -> DirectedGraph:
    """
    Parse an edge list: optional `# n=<count>` header, one `i j` pair per
    line, `#` comments. Undirected input (directed=False) mirrors each edge.
    """
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, bytes):
        text = _decode_lines(text)

    declared_n: Optional[int] = None
    pairs: List[Tuple[int, int]] = []

    for line_no, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            header = _HEADER_PATTERN.match(line)
            if header:
                if pairs:
                    raise EdgeListParseError(line_no, "`# n=` header must precede the first edge")
                if declared_n is not None:
                    raise EdgeListParseError(line_no, "duplicate `# n=` header")
                declared_n = int(header.group(1))
            continue
        content = line.split("#", 1)[0].split()
        if len(content) != 2:
            raise EdgeListParseError(line_no, f"expected two unit ids, got {raw.rstrip()!r}")
        try:
            i, j = int(content[0]), int(content[1])
        except ValueError:
            raise EdgeListParseError(line_no, f"non-integer unit id in {raw.rstrip()!r}")
        if i < 0 or j < 0:
            raise EdgeListParseError(line_no, f"negative unit id in {raw.rstrip()!r}")
        if i == j:
            raise EdgeListParseError(line_no, f"self-loop on unit {i}")
        if declared_n is not None and (i >= declared_n or j >= declared_n):
            raise EdgeListParseError(line_no, f"unit id out of range for n={declared_n}")
        pairs.append((i, j))

    n = declared_n if declared_n is not None else (max(max(p) for p in pairs) + 1 if pairs else 0)
    graph = DirectedGraph(n, pairs) if directed else DirectedGraph.from_undirected(n, pairs)
    logger.info(f"Loaded edge list: {graph}")
    return graph


def edge_list_text(g: DirectedGraph) -> str:
    """Serialize to the edge-list format; symmetric graphs list each pair once"""
    symmetric = g.is_symmetric()
    lines = [f"# n={g.n}", "# undirected" if symmetric else "# directed"]
    for i, j in g.edges():
        if symmetric and i > j:
            continue
        lines.append(f"{i} {j}")
    return "\n".join(lines) + "\n"


def closed_in_neighborhood(g: DirectedGraph, i: int) -> Set[int]:
    """Ĩ_i = I_i ∪ {i}"""
    i = _check_unit(g, i)
    return set(g.in_adj[i]) | {i}


def closed_out_neighborhood(g: DirectedGraph, i: int) -> Set[int]:
    """Õ_i = O_i ∪ {i}"""
    i = _check_unit(g, i)
    return set(g.out_adj[i]) | {i}


def removal_sets(g: DirectedGraph) -> Tuple[np.ndarray, ...]:
    """
    Removal sets of every unit as index arrays, cached on the graph.

    Row i of Ã^T Ã (Ã = A + I) is nonzero exactly on ∪_{l ∈ Ĩ_i} Õ_l.
    """
    def build():
        closed = (g.adjacency + sps.identity(g.n, dtype=np.int64, format="csr")).tocsr()
        product = (closed.T @ closed).tocsr()
        product.sort_indices()
        logger.debug(f"Built removal sets for {g}")
        return tuple(
            product.indices[product.indptr[i]:product.indptr[i + 1]].astype(np.int64)
            for i in range(g.n)
        )

    return g.cached("removal", build)


def removal_set(g: DirectedGraph, i: int) -> Set[int]:
    """Units removed from V₁ when i joins the isolated set"""
    i = _check_unit(g, i)
    return set(int(j) for j in removal_sets(g)[i])


@dataclass(frozen=True)
class DegreePMF:
    """Empirical PMF of in-degrees over the support 0..len(prob)-1"""
    prob: np.ndarray
    empty: bool = False

    @property
    def d_max_ref(self) -> int:
        return len(self.prob) - 1


def degree_pmf(g: DirectedGraph, subset: Iterable[int], d_max_ref: Optional[int] = None) -> DegreePMF:
    """PMF of {d_i : i ∈ subset}; an empty subset yields a flagged-empty PMF"""
    if d_max_ref is None:
        d_max_ref = g.d_max
    members = np.fromiter((int(i) for i in subset), dtype=np.int64)
    if members.size == 0:
        return DegreePMF(prob=np.zeros(d_max_ref + 1), empty=True)
    if members.min() < 0 or members.max() >= g.n:
        raise UnitIndexError(f"subset references a unit outside 0..{g.n - 1}")
    degrees = g.in_degree[members]
    if degrees.max() > d_max_ref:
        raise PMFSupportError(f"in-degree {degrees.max()} exceeds reference maximum {d_max_ref}")
    counts = np.bincount(degrees, minlength=d_max_ref + 1)
    return DegreePMF(prob=counts / members.size)


def l2_pmf_distance_sq(p: DegreePMF, q: DegreePMF) -> float:
    """Σ_d (p(d) - q(d))²"""
    if len(p.prob) != len(q.prob):
        raise PMFSupportError(f"support lengths differ: {len(p.prob)} vs {len(q.prob)}")
    diff = p.prob - q.prob
    return float(diff @ diff)


def squared_graph(g: DirectedGraph) -> DirectedGraph:
    """
    2-order network: (i, j) present iff a directed path i -> l -> j exists.
    Diagonal entries (i -> l -> i) are dropped so the result is a valid
    DirectedGraph; closed neighborhoods already contain i.
    """
    product = (g.adjacency @ g.adjacency).tolil()
    product.setdiag(0)
    product = product.tocsr()
    product.eliminate_zeros()
    return DirectedGraph.from_adjacency(product)


@dataclass(frozen=True)
class EigenResult:
    """Eigenvector computation outcome with convergence / degeneracy flags"""
    vector: np.ndarray
    value: float
    converged: bool
    degenerate: bool = False
    iterations: int = 0


def principal_eigenvector(g: DirectedGraph, tol: float = 1e-10, max_iter: int = 10000) -> EigenResult:
    """
    Perron eigenvector of the adjacency by power iteration.

    Iterates with A + I, which has the same eigenvectors as A and makes the
    Perron root strictly dominant on bipartite graphs. The returned vector is
    nonnegative with unit L2 norm; the eigenvalue is the Rayleigh quotient.
    On a disconnected adjacency the vector is supported on the dominant
    block only; disconnected or reducible inputs are flagged degenerate.
    """
    n = g.n
    if n == 0:
        raise ValueError("principal eigenvector of an empty graph is undefined")

    uniform = np.full(n, 1.0 / np.sqrt(n))
    adjacency = g.adjacency.astype(np.float64)
    if adjacency.nnz == 0:
        logger.warning(f"Adjacency of {g} is all zero; returning the uniform vector")
        return EigenResult(vector=uniform, value=0.0, converged=True, degenerate=True)

    x = uniform
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        y = adjacency @ x + x
        y /= np.linalg.norm(y)
        step = float(np.max(np.abs(y - x)))
        x = y
        if step < tol:
            converged = True
            break

    if not converged:
        logger.warning(f"Power iteration did not converge within {max_iter} steps on {g}")

    strong = connected_components(adjacency, directed=True, connection="strong")[0]
    blocks, labels = connected_components(adjacency, directed=True, connection="weak")
    if blocks > 1:
        x = _keep_dominant_block(adjacency, x, labels, blocks)
    value = float(x @ (adjacency @ x))
    return EigenResult(vector=x, value=value, converged=converged, degenerate=bool(strong > 1),
                       iterations=iterations)


def _keep_dominant_block(adjacency: sps.csr_matrix, x: np.ndarray, labels: np.ndarray, blocks: int) -> np.ndarray:
    """
    Zero the iterate outside the weakly connected block with the largest
    growth ratio |A_b x_b| / |x_b| (ties to the block holding the lowest unit).
    Entries of the other blocks are decayed remainders of the start vector.
    """
    best_block, best_ratio = -1, -np.inf
    for block in range(blocks):
        members = np.flatnonzero(labels == block)
        part = x[members]
        norm = np.linalg.norm(part)
        if norm == 0:
            continue
        ratio = np.linalg.norm(adjacency[members][:, members] @ part) / norm
        if ratio > best_ratio + 1e-9 * max(best_ratio, 1.0):
            best_block, best_ratio = block, ratio
    kept = np.where(labels == best_block, x, 0.0)
    return kept / np.linalg.norm(kept)


def laplacian_homophily_vector(g: DirectedGraph, degeneracy_gap: float = 1e-9) -> EigenResult:
    """
    Eigenvector of D^{-1}L for its second-smallest eigenvalue.

    Solved through the symmetric form D^{-1/2} A D^{-1/2} with the constant
    eigenvector (∝ D^{1/2} 1) deflated; h = D^{-1/2} u. The result satisfies
    Σ_i d_i h_i = 0 (D-weighted orthogonality to the constant vector), has
    unit L2 norm, and its first nonzero entry is positive. Zero-degree units
    get entry 0. Disconnected graphs and repeated eigenvalues are flagged.
    """
    if not g.is_symmetric():
        raise ValueError("the homophily vector requires an undirected (symmetric) graph")

    n = g.n
    degrees = g.in_degree.astype(np.float64)
    active = np.flatnonzero(degrees > 0)
    h = np.zeros(n)
    if active.size < 2:
        logger.warning(f"{g} has fewer than two connected units; homophily vector is zero")
        return EigenResult(vector=h, value=0.0, converged=True, degenerate=True)

    sub = g.adjacency[active][:, active].astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(degrees[active])
    normalized = sps.diags(inv_sqrt) @ sub @ sps.diags(inv_sqrt)
    constant = np.sqrt(degrees[active])
    constant /= np.linalg.norm(constant)
    m = active.size

    if m <= DENSE_EIGEN_LIMIT:
        laplacian = np.eye(m) - normalized.toarray()
        values, vectors = np.linalg.eigh(laplacian)
        lam, u = float(values[1]), vectors[:, 1]
        next_lam = float(values[2]) if m > 2 else np.inf
    else:
        # Shift the constant direction to -2, below the spectrum of the
        # normalized adjacency, so the largest eigenpair is the target.
        operator = LinearOperator(
            (m, m),
            matvec=lambda x: normalized @ np.ravel(x) - 3.0 * constant * (constant @ np.ravel(x)),
            dtype=np.float64,
        )
        start = np.linspace(1.0, 2.0, m)
        values, vectors = eigsh(operator, k=2, which="LA", v0=start, tol=1e-12)
        order = np.argsort(values)[::-1]
        lam = float(1.0 - values[order[0]])
        next_lam = float(1.0 - values[order[1]])
        u = vectors[:, order[0]]

    h[active] = inv_sqrt * u
    h /= np.linalg.norm(h)
    nonzero = np.flatnonzero(np.abs(h) > 1e-12)
    if nonzero.size and h[nonzero[0]] < 0:
        h = -h

    components = connected_components(sub, directed=False)[0]
    degenerate = components > 1 or abs(next_lam - lam) < degeneracy_gap
    if degenerate:
        logger.warning(
            f"Homophily eigenproblem on {g} is degenerate "
            f"(components={components}, lambda2={lam:.3g}, lambda3={next_lam:.3g})"
        )
    return EigenResult(vector=h, value=lam, converged=True, degenerate=bool(degenerate))
