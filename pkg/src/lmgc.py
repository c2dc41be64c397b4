"""
Localized MIMO graph convolution (LMGC)

f(A, X)_i = sum_{j in N(i)} X_j W~_(i,j),  W~_(i,j) = sum_k a_k(x_i, x_j) W_(k),
equivalently sum_k A_(k) X W_(k) with (A_(k))_ij = a_k(x_i, x_j) on the support.
"""
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from .config import LEAKY_RELU_SLOPE, PROBE_DISTINCT_TOL, RANK_TOL
from .errors import DimensionMismatchError, GraphStructureError, InvalidParameterError
from .logger import get_logger
from .models import Activation, Graph, OperatorBundle
from .mp_ops import masked_row_softmax

logger = get_logger("lmgc")


class WeightFn(Enum):
    TANH_MLP = "tanh_mlp"
    SOFTMAX_HEADS = "softmax_heads"
    FAGCN = "fagcn"
    CONSTANT = "constant"


@dataclass(frozen=True, eq=False)
class LmgcParams:
    """
    K feature transformations plus the per-edge coefficient function.

    gates[k] has length 2*K*c and is ignored by the constant variant, whose
    constant_values[k] is either a scalar or an n x n matrix of per-edge values.
    Gates carry no bias terms.
    """
    weights: Tuple[np.ndarray, ...]
    gates: Tuple[np.ndarray, ...]
    weight_fn: WeightFn
    constant_values: Tuple[object, ...] = ()
    self_loops: bool = False
    slope: float = LEAKY_RELU_SLOPE

    def __post_init__(self):
        object.__setattr__(self, "weight_fn", WeightFn(self.weight_fn))
        if not self.weights:
            raise InvalidParameterError("LMGC needs K >= 1 weight matrices")
        shape = self.weights[0].shape
        if any(w.shape != shape or w.ndim != 2 for w in self.weights):
            raise DimensionMismatchError("all LMGC weights must share one (d, c) shape")
        if self.weight_fn is WeightFn.CONSTANT:
            if len(self.constant_values) != self.K:
                raise InvalidParameterError(f"constant variant needs {self.K} values, got {len(self.constant_values)}")
        else:
            if len(self.gates) != self.K or any(v.shape != (2 * self.K * self.c,) for v in self.gates):
                raise DimensionMismatchError(f"need {self.K} gate vectors of length {2 * self.K * self.c}")

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.weights[0].shape[0]

    @property
    def c(self) -> int:
        return self.weights[0].shape[1]

    def is_zero(self) -> bool:
        return all(not np.any(w) for w in self.weights)


def init_params(K: int, d: int, c: int, weight_fn: WeightFn | str, rng: np.random.Generator,
                constant_values: Sequence[object] = (), self_loops: bool = False) -> LmgcParams:
    """Weights N(0, 1/d); gates uniform in [-1, 1] scaled by 1/sqrt(2Kc)"""
    weights = tuple(rng.standard_normal((d, c)) / np.sqrt(d) for _ in range(K))
    fan_in = 2 * K * c
    gates = tuple(rng.uniform(-1.0, 1.0, fan_in) / np.sqrt(fan_in) for _ in range(K))
    return LmgcParams(weights=weights, gates=gates, weight_fn=WeightFn(weight_fn),
                      constant_values=tuple(constant_values), self_loops=self_loops)


def _hidden(p: LmgcParams, x_i: np.ndarray, x_j: np.ndarray) -> np.ndarray:
    h = np.concatenate([x_i @ w for w in p.weights] + [x_j @ w for w in p.weights])
    return np.where(h > 0, h, p.slope * h)


def edge_coefficients(p: LmgcParams, x_i: np.ndarray, x_j: np.ndarray, *, i: int | None = None,
                      j: int | None = None, d_i: float = 1.0, d_j: float = 1.0) -> np.ndarray:
    """
    Coefficients a_1..a_K of the edge j -> i.

    softmax_heads returns raw scores; normalization over the neighborhood
    happens in coefficient_matrices.
    """
    x_i = np.asarray(x_i, dtype=float).ravel()
    x_j = np.asarray(x_j, dtype=float).ravel()
    if x_i.size != p.d or x_j.size != p.d:
        raise DimensionMismatchError(f"node features of size {x_i.size}/{x_j.size}, params expect {p.d}")
    if p.weight_fn is WeightFn.CONSTANT:
        out = []
        for value in p.constant_values:
            if np.ndim(value) == 0:
                out.append(float(value))
            elif i is None or j is None:
                raise InvalidParameterError("per-edge constant values need the edge indices")
            else:
                out.append(float(np.asarray(value)[i, j]))
        return np.array(out)
    z = _hidden(p, x_i, x_j)
    scores = np.array([z @ v for v in p.gates])
    if p.weight_fn is WeightFn.SOFTMAX_HEADS:
        return scores
    coeffs = np.tanh(scores)
    if p.weight_fn is WeightFn.FAGCN:
        coeffs = coeffs / np.sqrt(d_i * d_j)
    return coeffs


def _support(g: Graph, p: LmgcParams) -> np.ndarray:
    support = g.adjacency() != 0
    if p.self_loops:
        support = support | np.eye(g.n, dtype=bool)
    return support


def coefficient_matrices(g: Graph, x: np.ndarray, p: LmgcParams) -> List[np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n, p.d):
        raise DimensionMismatchError(f"features of shape {x.shape}, expected ({g.n}, {p.d})")
    support = _support(g, p)
    deg = support.sum(axis=1).astype(float)
    if p.weight_fn is WeightFn.SOFTMAX_HEADS and np.any(deg == 0):
        raise GraphStructureError(f"node {int(np.flatnonzero(deg == 0)[0])} has no neighbor to normalize over")
    mats = [np.zeros((g.n, g.n)) for _ in range(p.K)]
    for i, j in zip(*np.nonzero(support)):
        coeffs = edge_coefficients(p, x[i], x[j], i=int(i), j=int(j), d_i=deg[i], d_j=deg[j])
        if not np.all(np.isfinite(coeffs)):
            raise InvalidParameterError(f"non-finite coefficient on edge ({i}, {j})")
        for k in range(p.K):
            mats[k][i, j] = coeffs[k]
    if p.weight_fn is WeightFn.SOFTMAX_HEADS:
        mats = [masked_row_softmax(m, support) for m in mats]
    return mats


def edge_transforms(g: Graph, x: np.ndarray, p: LmgcParams) -> Dict[Tuple[int, int], np.ndarray]:
    """Effective per-edge transformation W~_(i,j)"""
    mats = coefficient_matrices(g, x, p)
    support = _support(g, p)
    return {(int(i), int(j)): sum(m[i, j] * w for m, w in zip(mats, p.weights))
            for i, j in zip(*np.nonzero(support))}


def lmgc_step(g: Graph, x: np.ndarray, p: LmgcParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    mats = coefficient_matrices(g, x, p)
    out = sum(m @ x @ w for m, w in zip(mats, p.weights))
    if logger.isEnabledFor(logging.DEBUG):
        per_edge = np.zeros_like(out)
        for (i, j), w_tilde in edge_transforms(g, x, p).items():
            per_edge[i] += x[j] @ w_tilde
        gap = float(np.max(np.abs(per_edge - out))) if out.size else 0.0
        logger.debug(f"LMGC per-edge form deviates by {gap:.2e}")
        if gap > 1e-12 * max(1.0, float(np.max(np.abs(out)))):
            logger.warning(f"LMGC per-edge and matrix forms disagree by {gap:.2e}")
    return out


def materialize(g: Graph, x: np.ndarray, p: LmgcParams) -> OperatorBundle:
    """The K edge-weighted computational graphs with their transformations as a linear bundle"""
    mats = coefficient_matrices(g, x, p)
    return OperatorBundle(terms=tuple(zip(mats, p.weights)), activation=Activation.IDENTITY)


def aggregate_multiset(p: LmgcParams, center: np.ndarray, multiset: Sequence[np.ndarray]) -> np.ndarray:
    """Output of one node with features center whose neighbors carry the given multiset"""
    if not len(multiset):
        raise InvalidParameterError("neighbor multiset is empty")
    center = np.asarray(center, dtype=float).ravel()
    ys = [np.asarray(y, dtype=float).ravel() for y in multiset]
    coeffs = np.stack([edge_coefficients(p, center, y, d_i=len(ys)) for y in ys])
    if p.weight_fn is WeightFn.SOFTMAX_HEADS:
        coeffs = softmax(coeffs, axis=0)
    out = np.zeros(p.c)
    for row, y in zip(coeffs, ys):
        for a_k, w in zip(row, p.weights):
            out += a_k * (y @ w)
    return out


@dataclass
class ProbeReport:
    variant: str
    trials: int
    passes: int = 0
    failures: List[Tuple[int, str]] = field(default_factory=list)
    degenerate: List[int] = field(default_factory=list)

    @property
    def pass_rate(self) -> float:
        return self.passes / self.trials if self.trials else 0.0

    def to_dict(self) -> dict:
        return {"variant": self.variant, "trials": self.trials, "passes": self.passes,
                "failures": [[seed, label] for seed, label in self.failures], "degenerate": self.degenerate}


def _draw(p: LmgcParams, trial: int, seed: int, redraw: bool) -> Tuple[LmgcParams, np.random.Generator]:
    rng = np.random.default_rng([seed, trial])
    if not redraw:
        return p, rng
    return init_params(p.K, p.d, p.c, p.weight_fn, rng, p.constant_values, p.self_loops), rng


def injectivity_probe(p: LmgcParams, base_x: np.ndarray, m: int, trials: int, seed: int = 0,
                      redraw: bool = True) -> ProbeReport:
    """
    Check that the aggregation separates {{x}} from {{x, ..., x}} (2..m copies) and
    random distinct-element multisets, over `trials` parameter draws.
    """
    if m < 2:
        raise InvalidParameterError(f"max multiplicity must be >= 2, got {m}")
    base_x = np.asarray(base_x, dtype=float).ravel()
    report = ProbeReport(variant=p.weight_fn.value, trials=trials)
    for trial in range(trials):
        params, rng = _draw(p, trial, seed, redraw)
        y, z = rng.standard_normal((2, params.d))
        pairs = [(f"x*1 vs x*{k}", [base_x], [base_x] * k) for k in range(2, m + 1)]
        pairs += [("y vs z", [y], [z]), ("x+y vs x+z", [base_x, y], [base_x, z])]
        if params.is_zero():
            report.degenerate.append(trial)
        ok = True
        for label, left, right in pairs:
            gap = np.linalg.norm(aggregate_multiset(params, base_x, left) - aggregate_multiset(params, base_x, right))
            if gap <= PROBE_DISTINCT_TOL:
                report.failures.append((trial, label))
                ok = False
        report.passes += ok
    logger.info(f"injectivity probe {report.variant}: {report.passes}/{trials} draws passed")
    return report


def multiset_battery(vectors: Sequence[np.ndarray], count: int = 20) -> List[List[np.ndarray]]:
    """The first `count` distinct multisets over the given vectors, smallest first"""
    battery: List[List[np.ndarray]] = []
    size = 1
    while len(battery) < count:
        for combo in itertools.combinations_with_replacement(range(len(vectors)), size):
            battery.append([vectors[k] for k in combo])
            if len(battery) == count:
                break
        size += 1
    return battery


def injectivity_battery(p: LmgcParams, center: np.ndarray, multisets: Sequence[Sequence[np.ndarray]],
                        trials: int, seed: int = 0) -> ProbeReport:
    """A draw passes when all multisets in the battery map to pairwise distinct outputs"""
    report = ProbeReport(variant=p.weight_fn.value, trials=trials)
    for trial in range(trials):
        params, _ = _draw(p, trial, seed, redraw=True)
        outs = np.stack([aggregate_multiset(params, center, ms) for ms in multisets])
        gaps = np.linalg.norm(outs[:, None, :] - outs[None, :, :], axis=2)
        collisions = np.argwhere(np.triu(gaps <= PROBE_DISTINCT_TOL, 1))
        if collisions.size:
            report.failures.append((trial, f"multisets {collisions[0][0]} and {collisions[0][1]}"))
        else:
            report.passes += 1
    return report


@dataclass
class IndependenceProbeReport:
    variant: str
    trials: int
    independent_draws: List[int]

    @property
    def passed(self) -> List[bool]:
        return [count >= self.trials - 1 for count in self.independent_draws]

    def to_dict(self) -> dict:
        return {"variant": self.variant, "trials": self.trials, "independent_draws": self.independent_draws,
                "passed": self.passed}


def independence_probe(p: LmgcParams, pairs: Sequence[Tuple[Tuple[np.ndarray, Sequence[np.ndarray]],
                                                            Tuple[np.ndarray, Sequence[np.ndarray]]]],
                       trials: int, seed: int = 0) -> IndependenceProbeReport:
    """
    For each pair of nodes (center, neighbor multiset), count parameter draws where the
    two outputs are linearly independent; a pair passes with at least trials - 1.
    """
    counts = [0] * len(pairs)
    for trial in range(trials):
        params, _ = _draw(p, trial, seed, redraw=True)
        for idx, ((xa, ma), (xb, mb)) in enumerate(pairs):
            stacked = np.stack([aggregate_multiset(params, xa, ma), aggregate_multiset(params, xb, mb)])
            sigma = np.linalg.svd(stacked, compute_uv=False)
            if sigma.size >= 2 and sigma[0] > 0 and sigma[1] > RANK_TOL * max(1.0, sigma[0]):
                counts[idx] += 1
    report = IndependenceProbeReport(variant=p.weight_fn.value, trials=trials, independent_draws=counts)
    logger.info(f"independence probe {report.variant}: {sum(report.passed)}/{len(pairs)} pairs passed")
    return report
