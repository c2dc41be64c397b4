import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, TextIO, Tuple

import numpy as np

from .errors import DimensionMismatchError, GraphStructureError, InvalidParameterError


class Activation(Enum):
    """Elementwise nonlinearities applied after aggregation"""
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.TANH:
            return np.tanh(z)
        return z

    def derivative(self, z: np.ndarray) -> np.ndarray:
        """Derivative at z; ReLU'(0) is taken as 0"""
        if self is Activation.RELU:
            return (z > 0.0).astype(float)
        if self is Activation.TANH:
            return 1.0 - np.tanh(z) ** 2
        return np.ones_like(z)


class NormKind(Enum):
    """Adjacency normalizations"""
    RAW = "raw"
    SYM = "sym"
    RW = "rw"
    PR = "pr"


class LaplacianKind(Enum):
    UNNORMALIZED = "unnormalized"
    SYM = "sym"
    RW = "rw"


@dataclass(frozen=True)
class Graph:
    """Node-edge structure; (i, j, w) places weight w at adjacency row i, column j"""
    n: int
    edges: Tuple[Tuple[int, int, float], ...]
    directed: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameterError(f"graph needs at least one node, got n={self.n}")
        seen: Dict[Tuple[int, int], float] = {}
        for i, j, w in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphStructureError(f"edge ({i}, {j}) out of range for n={self.n}")
            if (i, j) in seen:
                raise GraphStructureError(f"duplicate edge ({i}, {j})")
            seen[(i, j)] = w
        if not self.directed:
            for (i, j), w in seen.items():
                if seen.get((j, i)) != w:
                    raise GraphStructureError(f"undirected graph is missing the reverse of ({i}, {j}, {w})")

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            a[i, j] = w
        return a

    def degrees(self) -> np.ndarray:
        """Weighted row sums of the adjacency matrix"""
        return self.adjacency().sum(axis=1)

    def neighbors(self, i: int) -> List[int]:
        return sorted(j for a, j, _ in self.edges if a == i)

    @property
    def edge_count(self) -> int:
        """Number of undirected edges (each stored twice) or directed entries"""
        if self.directed:
            return len(self.edges)
        loops = sum(1 for i, j, _ in self.edges if i == j)
        return (len(self.edges) - loops) // 2 + loops


@dataclass(frozen=True, eq=False)
class AggregationMatrix:
    matrix: np.ndarray
    kind: NormKind
    self_loops: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Orthonormal eigendecomposition, eigenvalues sorted descending"""
    basis: np.ndarray
    eigenvalues: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass
class MetricTrace:
    """Per-iteration metric records; overflow rows carry value inf"""
    records: List[Tuple[int, str, float]] = field(default_factory=list)
    overflow: bool = False
    metadata: Dict[str, object] = field(default_factory=dict)

    def append(self, iteration: int, metric: str, value: float) -> None:
        self.records.append((iteration, metric, float(value)))

    def metrics(self) -> List[str]:
        names: List[str] = []
        for _, name, _ in self.records:
            if name not in names:
                names.append(name)
        return names

    def values(self, metric: str) -> np.ndarray:
        return np.array([v for _, name, v in self.records if name == metric])

    def iterations(self, metric: str) -> List[int]:
        return [it for it, name, _ in self.records if name == metric]

    def last(self, metric: str) -> float:
        finite = [v for v in self.values(metric) if math.isfinite(v)]
        return finite[-1] if finite else math.inf

    def to_csv(self, sink: TextIO, seed: int | None = None) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["iteration", "metric", "value"] if seed is None else ["seed", "iteration", "metric", "value"])
        for iteration, metric, value in self.records:
            cell = repr(value) if math.isfinite(value) else "inf_flag"
            writer.writerow([iteration, metric, cell] if seed is None else [seed, iteration, metric, cell])

    @classmethod
    def mean_over_seeds(cls, traces: Iterable["MetricTrace"]) -> "MetricTrace":
        """Average finite values per (iteration, metric) across runs"""
        buckets: Dict[Tuple[int, str], List[float]] = {}
        order: List[Tuple[int, str]] = []
        traces = list(traces)
        for trace in traces:
            for iteration, metric, value in trace.records:
                key = (iteration, metric)
                if key not in buckets:
                    buckets[key] = []
                    order.append(key)
                if math.isfinite(value):
                    buckets[key].append(value)
        mean = cls(overflow=any(t.overflow for t in traces), metadata={"seeds": len(traces)})
        for iteration, metric in sorted(order, key=lambda k: (k[1], k[0])):
            vals = buckets[(iteration, metric)]
            mean.append(iteration, metric, float(np.mean(vals)) if vals else math.inf)
        return mean


@dataclass(frozen=True, eq=False)
class OperatorBundle:
    """Ordered (aggregation, weight) pairs of one message-passing step"""
    terms: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        if not self.terms:
            raise InvalidParameterError("operator bundle needs at least one term")
        n = self.terms[0][0].shape[0]
        wshape = self.terms[0][1].shape
        for agg, weight in self.terms:
            if agg.ndim != 2 or agg.shape != (n, n):
                raise DimensionMismatchError(f"aggregation of shape {agg.shape}, expected ({n}, {n})")
            if weight.ndim != 2 or weight.shape != wshape:
                raise DimensionMismatchError(f"weight of shape {weight.shape}, expected {wshape}")

    @property
    def n(self) -> int:
        return self.terms[0][0].shape[0]

    @property
    def d(self) -> int:
        return self.terms[0][1].shape[0]

    @property
    def c(self) -> int:
        return self.terms[0][1].shape[1]

    @property
    def aggs(self) -> List[np.ndarray]:
        return [agg for agg, _ in self.terms]

    @property
    def weights(self) -> List[np.ndarray]:
        return [w for _, w in self.terms]


@dataclass(frozen=True, eq=False)
class KroneckerOperator:
    """Vectorized step: vec(X') = t @ vec(X) with column-major vec"""
    t: np.ndarray
    n: int
    d: int
    c: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (self.t @ x.reshape(-1, order="F")).reshape((self.n, self.c), order="F")
