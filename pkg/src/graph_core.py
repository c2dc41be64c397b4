"""
Graph construction, normalization and Laplacians

Dense numpy matrices throughout; every theorem check downstream needs full
spectra, so sparse storage buys nothing at the supported sizes.
"""
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, TextIO, Tuple

import networkx as nx
import numpy as np

from .errors import DimensionMismatchError, GraphFormatError, GraphStructureError, InvalidParameterError
from .logger import get_logger
from .models import AggregationMatrix, Graph, LaplacianKind, NormKind

logger = get_logger("graph_core")


def load_edge_list(text: str, directed: bool = False) -> Graph:
    """Parse 'i j [w]' lines; '#' starts a comment; undirected input is symmetrized"""
    entries: Dict[Tuple[int, int], float] = {}
    max_id = -1
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#')[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) not in (2, 3):
            raise GraphFormatError(line_number, f"expected 'i j [w]', got {raw.strip()!r}")
        try:
            i, j = int(tokens[0]), int(tokens[1])
            w = float(tokens[2]) if len(tokens) == 3 else 1.0
        except ValueError as e:
            raise GraphFormatError(line_number, f"cannot parse {raw.strip()!r}: {e}") from e
        if i < 0 or j < 0:
            raise GraphFormatError(line_number, f"negative node id in {raw.strip()!r}")
        if not np.isfinite(w):
            raise GraphFormatError(line_number, f"non-finite weight {w}")
        if (i, j) in entries:
            raise GraphFormatError(line_number, f"duplicate edge ({i}, {j})")
        entries[(i, j)] = w
        max_id = max(max_id, i, j)

    if not entries:
        raise GraphFormatError(0, "empty graph")

    if not directed:
        for (i, j), w in list(entries.items()):
            reverse = entries.get((j, i))
            if reverse is None:
                entries[(j, i)] = w
            elif reverse != w:
                raise GraphFormatError(0, f"edge ({i}, {j}) listed with conflicting weights {w} and {reverse}")

    edges = tuple((i, j, w) for (i, j), w in sorted(entries.items()))
    graph = Graph(n=max_id + 1, edges=edges, directed=directed)
    logger.debug(f"Loaded graph with n={graph.n} and {len(edges)} edge entries")
    return graph


def load_edge_file(path: str | Path, directed: bool = False) -> Graph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"edge list not found: {path}")
    return load_edge_list(path.read_text(encoding="utf-8"), directed=directed)


def edge_list_text(g: Graph) -> str:
    """Inverse of load_edge_list; undirected graphs list each pair once"""
    lines = []
    for i, j, w in g.edges:
        if not g.directed and j < i:
            continue
        lines.append(f"{i} {j}" if w == 1.0 else f"{i} {j} {w!r}")
    return "\n".join(lines) + "\n"


def from_networkx(nxg: nx.Graph, weight: str | None = None) -> Graph:
    """Convert a networkx graph with nodes 0..n-1; weight=None ignores edge attributes"""
    n = nxg.number_of_nodes()
    directed = nxg.is_directed()
    entries: Dict[Tuple[int, int], float] = {}
    for u, v, data in nxg.edges(data=True):
        w = float(data.get(weight, 1.0)) if weight else 1.0
        entries[(int(u), int(v))] = w
        if not directed:
            entries[(int(v), int(u))] = w
    return Graph(n=n, edges=tuple((i, j, w) for (i, j), w in sorted(entries.items())), directed=directed)


def to_networkx(g: Graph) -> nx.Graph:
    nxg = nx.DiGraph() if g.directed else nx.Graph()
    nxg.add_nodes_from(range(g.n))
    nxg.add_weighted_edges_from(g.edges)
    return nxg


def from_adjacency(a: np.ndarray, directed: bool = False) -> Graph:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"adjacency must be square, got {a.shape}")
    rows, cols = np.nonzero(a)
    return Graph(n=a.shape[0], edges=tuple((int(i), int(j), float(a[i, j])) for i, j in zip(rows, cols)),
                 directed=directed)


def add_self_loops(g: Graph) -> Graph:
    present = {i for i, j, _ in g.edges if i == j}
    extra = tuple((i, i, 1.0) for i in range(g.n) if i not in present)
    return Graph(n=g.n, edges=tuple(sorted(g.edges + extra)), directed=g.directed)


# Generators

def complete(n: int) -> Graph:
    _require(n >= 1, f"complete graph needs n >= 1, got {n}")
    return from_networkx(nx.complete_graph(n))


def cycle(n: int) -> Graph:
    _require(n >= 3, f"cycle needs n >= 3, got {n}")
    return from_networkx(nx.cycle_graph(n))


def star(k: int) -> Graph:
    """Center node 0 joined to leaves 1..k"""
    _require(k >= 1, f"star needs k >= 1 leaves, got {k}")
    return from_networkx(nx.star_graph(k))


def path(n: int) -> Graph:
    _require(n >= 1, f"path needs n >= 1, got {n}")
    return from_networkx(nx.path_graph(n))


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    _require(n >= 1, f"Erdos-Renyi needs n >= 1, got {n}")
    _require(0.0 <= p <= 1.0, f"edge probability must lie in [0, 1], got {p}")
    return from_networkx(nx.erdos_renyi_graph(n, p, seed=seed))


def karate_club() -> Graph:
    """Zachary's karate club: 34 nodes, 78 undirected edges, unweighted"""
    return from_networkx(nx.karate_club_graph())


GENERATORS: Dict[str, Callable[..., Graph]] = {
    "complete": complete,
    "cycle": cycle,
    "star": star,
    "path": path,
    "erdos_renyi": erdos_renyi,
    "karate_club": karate_club,
}


def generate(kind: str, **params) -> Graph:
    """Dispatch to a named generator, e.g. generate("erdos_renyi", n=16, p=0.1, seed=7)"""
    if kind not in GENERATORS:
        raise InvalidParameterError(f"unknown generator {kind!r}; choose from {sorted(GENERATORS)}")
    try:
        return GENERATORS[kind](**params)
    except TypeError as e:
        raise InvalidParameterError(f"bad parameters for generator {kind!r}: {e}") from e


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidParameterError(message)


# Normalizations

def normalize(g: Graph, kind: NormKind | str, self_loops: bool = False) -> AggregationMatrix:
    """
    Normalized adjacency of g.

    sym: D^-1/2 A D^-1/2, rw: D^-1 A (row-stochastic), pr: A D^-1 (column-stochastic).
    With self_loops the identity is added to A before degrees are taken.
    """
    kind = NormKind(kind)
    a = g.adjacency()
    if self_loops:
        a = a + np.eye(g.n)
    if kind is NormKind.RAW:
        return AggregationMatrix(matrix=a, kind=kind, self_loops=self_loops)

    deg = a.sum(axis=0) if kind is NormKind.PR else a.sum(axis=1)
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        raise GraphStructureError(
            f"node {int(isolated[0])} has degree {deg[isolated[0]]} under {kind.value} normalization"
            f"{'' if self_loops else ' (add self-loops?)'}")

    if kind is NormKind.SYM:
        inv_sqrt = 1.0 / np.sqrt(deg)
        m = a * np.outer(inv_sqrt, inv_sqrt)
    elif kind is NormKind.RW:
        m = a / deg[:, None]
    else:
        m = a / deg[None, :]
    return AggregationMatrix(matrix=m, kind=kind, self_loops=self_loops)


def laplacian(g: Graph, kind: LaplacianKind | str = LaplacianKind.UNNORMALIZED) -> np.ndarray:
    kind = LaplacianKind(kind)
    if g.directed:
        raise GraphStructureError("laplacian requires an undirected graph")
    if kind is LaplacianKind.UNNORMALIZED:
        a = g.adjacency()
        return np.diag(a.sum(axis=1)) - a
    norm = NormKind.SYM if kind is LaplacianKind.SYM else NormKind.RW
    return np.eye(g.n) - normalize(g, norm).matrix


def sym_laplacian_of(agg: AggregationMatrix) -> np.ndarray:
    """I - A_sym for an already normalized matrix (keeps its self-loop convention)"""
    return np.eye(agg.n) - agg.matrix


@dataclass(frozen=True)
class ConnectivityReport:
    connected: bool
    bipartite: bool

    @property
    def spectral_ready(self) -> bool:
        """Connected and non-bipartite: the dominant eigenvalue of A_sym is simple and strictly dominant"""
        return self.connected and not self.bipartite


def connectivity_report(g: Graph) -> ConnectivityReport:
    nxg = to_networkx(g)
    if g.directed:
        nxg = nxg.to_undirected()
    return ConnectivityReport(connected=nx.is_connected(nxg), bipartite=nx.is_bipartite(nxg))


def warn_if_degenerate(g: Graph, context: str) -> ConnectivityReport:
    report = connectivity_report(g)
    if not report.connected:
        logger.warning(f"{context}: graph is disconnected; dominance statements refer to several components")
    if report.bipartite:
        logger.warning(f"{context}: graph is bipartite; eigenvalue -1 ties the dominant component")
    return report


# DenseMatrix CSV

def write_matrix_csv(m: np.ndarray, sink: str | Path | TextIO) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if not np.all(np.isfinite(m)):
        raise InvalidParameterError("refusing to write a matrix with non-finite entries")
    np.savetxt(sink, m, delimiter=",", fmt="%.17g")


def read_matrix_csv(source: str | Path | TextIO) -> np.ndarray:
    if isinstance(source, (str, Path)) and not Path(source).exists():
        raise FileNotFoundError(f"matrix file not found: {source}")
    m = np.loadtxt(source, delimiter=",", ndmin=2)
    if not np.all(np.isfinite(m)):
        raise InvalidParameterError("matrix file contains non-finite entries")
    return m


def matrix_csv_text(m: np.ndarray) -> str:
    buffer = io.StringIO()
    write_matrix_csv(m, buffer)
    return buffer.getvalue()
