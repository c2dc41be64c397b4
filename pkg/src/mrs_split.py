"""
Multi-relational splits of a computational graph

Convention: an aggregation entry (i, j) carries a message from sender j to
receiver row i. The relation of an edge is f(i, j) = 1 if i < j in the
order, 2 if j < i, 3 otherwise; swap=True exchanges relations 1 and 2.
"""
import csv
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Sequence, TextIO, Tuple

import networkx as nx
import numpy as np

from .config import PPR_TOL, RANK_TOL, SCORE_TIE_TOL
from .errors import DimensionMismatchError, GraphStructureError, InvalidParameterError
from .graph_core import normalize
from .logger import get_logger
from .models import Activation, AggregationMatrix, Graph, NormKind, OperatorBundle
from .pprgnn import personalized_pagerank

logger = get_logger("mrs_split")


@dataclass(frozen=True)
class PartialOrder:
    """Strict partial order on nodes 0..n-1 as the set of pairs (i, j) with i < j"""
    n: int
    pairs: FrozenSet[Tuple[int, int]]

    def precedes(self, i: int, j: int) -> bool:
        return (i, j) in self.pairs

    @property
    def is_empty(self) -> bool:
        return not self.pairs

    @classmethod
    def from_scores(cls, scores: Sequence[float], tol: float = 0.0) -> "PartialOrder":
        """i < j iff score(i) < score(j) - tol"""
        s = np.asarray(scores, dtype=float)
        n = s.size
        return cls(n=n, pairs=frozenset((i, j) for i in range(n) for j in range(n) if s[i] < s[j] - tol))


def degree_ordering(g: Graph) -> PartialOrder:
    if g.directed:
        raise GraphStructureError("degree ordering requires an undirected graph")
    return PartialOrder.from_scores(g.degrees())


def random_ordering(n: int, seed: int) -> PartialOrder:
    """Seeded uniform total order"""
    ranks = np.random.default_rng(seed).permutation(n)
    return PartialOrder.from_scores(ranks)


def feature_ordering(features: np.ndarray) -> PartialOrder:
    """Order by the sum of each node's feature vector; ties stay unrelated"""
    features = np.asarray(features, dtype=float)
    return PartialOrder.from_scores(features.reshape(features.shape[0], -1).sum(axis=1))


def ppr_ordering(g: Graph, alpha: float, tol: float = SCORE_TIE_TOL) -> PartialOrder:
    """Order by personalized PageRank with a uniform restart distribution"""
    a_pr = normalize(g, NormKind.PR)
    scores = personalized_pagerank(a_pr, np.full(g.n, 1.0 / g.n), alpha, tol=PPR_TOL)
    logger.debug(f"PPR scores: {np.array2string(scores, precision=6)}")
    return PartialOrder.from_scores(scores, tol=tol)


@dataclass(frozen=True)
class RelationAssignment:
    relation: Dict[Tuple[int, int], int]
    l: int

    def edges_of(self, k: int) -> List[Tuple[int, int]]:
        return sorted(e for e, r in self.relation.items() if r == k)

    def to_csv(self, sink: TextIO) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["i", "j", "relation"])
        for (i, j), k in sorted(self.relation.items()):
            writer.writerow([i, j, k])


def trivial_assignment(g: Graph, self_loops: bool = False) -> RelationAssignment:
    relation = {(i, j): 1 for i, j, _ in g.edges}
    if self_loops:
        relation.update({(i, i): 1 for i in range(g.n)})
    return RelationAssignment(relation=relation, l=1)


def assign_relations(g: Graph, order: PartialOrder, swap: bool = False,
                     self_loops: bool = False) -> RelationAssignment:
    """Split edges into two DARs and a remainder; self_loops also assigns every (i, i)"""
    if order.n != g.n:
        raise DimensionMismatchError(f"order covers {order.n} nodes, graph has {g.n}")
    first, second = (2, 1) if swap else (1, 2)
    pairs = [(i, j) for i, j, _ in g.edges]
    if self_loops:
        present = set(pairs)
        pairs.extend((i, i) for i in range(g.n) if (i, i) not in present)
    relation = {}
    for i, j in pairs:
        if order.precedes(i, j):
            relation[(i, j)] = first
        elif order.precedes(j, i):
            relation[(i, j)] = second
        else:
            relation[(i, j)] = 3
    ra = RelationAssignment(relation=relation, l=3)
    for k in (1, 2):
        dag = nx.DiGraph(ra.edges_of(k))
        if not nx.is_directed_acyclic_graph(dag):
            raise GraphStructureError(f"relation {k} contains a cycle; the order is not strict")
    return ra


def split_aggregation(agg: AggregationMatrix | np.ndarray, ra: RelationAssignment) -> List[np.ndarray]:
    """Move every entry of agg into the matrix of its relation; the pieces sum to agg exactly"""
    m = agg.matrix if isinstance(agg, AggregationMatrix) else np.asarray(agg, dtype=float)
    mats = [np.zeros_like(m) for _ in range(ra.l)]
    covered = np.zeros(m.shape, dtype=bool)
    for (i, j), k in ra.relation.items():
        if not 1 <= k <= ra.l:
            raise InvalidParameterError(f"relation id {k} outside 1..{ra.l}")
        mats[k - 1][i, j] = m[i, j]
        covered[i, j] = True
    stray = np.argwhere(~covered & (m != 0))
    if stray.size:
        i, j = stray[0]
        raise GraphStructureError(f"aggregation entry ({i}, {j}) has no relation assigned")
    return mats


@dataclass(frozen=True, eq=False)
class InDegreeProfile:
    """Row i holds d^(i): the weighted in-degree of node i in every relation"""
    vectors: np.ndarray

    @classmethod
    def of(cls, mats: Sequence[np.ndarray]) -> "InDegreeProfile":
        return cls(vectors=np.stack([m.sum(axis=1) for m in mats], axis=1))


@dataclass(frozen=True, eq=False)
class IndependenceReport:
    profiles: InDegreeProfile
    independent_count: int
    pairs: np.ndarray

    def to_dict(self) -> dict:
        return {"independent_count": self.independent_count,
                "profiles": self.profiles.vectors.tolist(),
                "independent_pairs": [[int(i), int(j)] for i, j in np.argwhere(np.triu(self.pairs, 1))]}


def _rank(m: np.ndarray) -> int:
    sigma = np.linalg.svd(m, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > RANK_TOL * max(1.0, sigma[0])))


def independence_report(mats: Sequence[np.ndarray]) -> IndependenceReport:
    if not mats:
        raise InvalidParameterError("independence report needs at least one relation")
    n = mats[0].shape[0]
    for m in mats:
        if m.shape != (n, n):
            raise DimensionMismatchError(f"relation matrix of shape {m.shape}, expected ({n}, {n})")
    profiles = InDegreeProfile.of(mats)
    vecs = profiles.vectors
    pairs = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            pairs[i, j] = pairs[j, i] = _rank(vecs[[i, j]]) == 2
    return IndependenceReport(profiles=profiles, independent_count=_rank(vecs), pairs=pairs)


def root_nodes(mat: np.ndarray) -> List[int]:
    """Nodes that receive no message in this relation"""
    return [int(i) for i in np.flatnonzero(~np.any(np.asarray(mat) != 0, axis=1))]


def is_dar(mat: np.ndarray) -> bool:
    """Whether the relation's nonzero pattern is acyclic (admits a strict order)"""
    rows, cols = np.nonzero(mat)
    dag = nx.DiGraph()
    dag.add_nodes_from(range(mat.shape[0]))
    dag.add_edges_from((int(j), int(i)) for i, j in zip(rows, cols))
    return nx.is_directed_acyclic_graph(dag)


def mrs_bundle(mats: Sequence[np.ndarray], weights: Sequence[np.ndarray],
               activation: Activation | str = Activation.RELU) -> OperatorBundle:
    """MRS-GCN step sum_k A_(k) X W_(k); empty relations are kept as zero terms"""
    if len(mats) != len(weights):
        raise DimensionMismatchError(f"{len(mats)} relations but {len(weights)} weights")
    return OperatorBundle(terms=tuple((np.asarray(m, float), np.asarray(w, float)) for m, w in zip(mats, weights)),
                          activation=Activation(activation))
