"""
Over-smoothing and rank-collapse diagnostics
"""
import logging
import math
from enum import Enum
from typing import Callable, Dict, Iterable

import numpy as np

from .config import OVERFLOW_LOWER, OVERFLOW_UPPER, SYMMETRY_TOL
from .errors import DegenerateInputError, DimensionMismatchError, InvalidParameterError, StepError
from .graph_core import normalize
from .logger import get_logger
from .models import Graph, LaplacianKind, MetricTrace, NormKind, Spectrum

logger = get_logger("metrics")


class TraceMetric(Enum):
    E_L = "E_L"        # normalized Dirichlet energy w.r.t. D - A
    E_SYM = "E_sym"    # normalized Dirichlet energy w.r.t. I - A_sym
    ROD = "ROD"
    FROB = "frob"


class RodNorm(Enum):
    """Normalization used inside the rank-one distance"""
    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"


def _as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _spatial_energy(x: np.ndarray, lap: np.ndarray) -> float:
    """Pairwise form of tr(x^T L x) valid for any symmetric L"""
    off = -(lap - np.diag(np.diag(lap)))
    sq = np.sum(x * x, axis=1)
    pair = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    return float(0.5 * np.sum(off * pair) + np.sum(lap.sum(axis=1) * sq))


def dirichlet(x: np.ndarray, lap: np.ndarray) -> float:
    """tr(x^T L x)"""
    x = _as_matrix(x)
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1] or lap.shape[0] != x.shape[0]:
        raise DimensionMismatchError(f"laplacian {lap.shape} does not match signal {x.shape}")
    if np.max(np.abs(lap - lap.T)) > SYMMETRY_TOL:
        raise InvalidParameterError("laplacian is not symmetric")
    energy = float(np.trace(x.T @ lap @ x))
    if logger.isEnabledFor(logging.DEBUG):
        spatial = _spatial_energy(x, lap)
        residual = abs(spatial - energy)
        logger.debug(f"Dirichlet energy {energy:.6e}, spatial form residual {residual:.2e}")
        if residual > 1e-8 * max(1.0, abs(energy)):
            logger.warning(f"Dirichlet spatial/trace mismatch {residual:.2e}")
    return energy


def dirichlet_normalized(x: np.ndarray, lap: np.ndarray) -> float:
    """E(x / ||x||_F)"""
    x = _as_matrix(x)
    fro = float(np.linalg.norm(x))
    if fro == 0.0:
        raise DegenerateInputError("normalized Dirichlet energy of the zero matrix")
    return dirichlet(x, lap) / fro ** 2


def dirichlet_spatial(x: np.ndarray, g: Graph, kind: LaplacianKind | str = LaplacianKind.UNNORMALIZED) -> float:
    """Edge-sum form: 1/2 sum_(i,j) w_ij ||x_i/s_i - x_j/s_j||^2 with s = 1 or sqrt(d)"""
    kind = LaplacianKind(kind)
    if kind is LaplacianKind.RW:
        raise InvalidParameterError("the random-walk Laplacian has no symmetric edge-sum form")
    x = _as_matrix(x)
    if x.shape[0] != g.n:
        raise DimensionMismatchError(f"signal has {x.shape[0]} rows, graph has {g.n} nodes")
    scale = np.ones(g.n) if kind is LaplacianKind.UNNORMALIZED else np.sqrt(g.degrees())
    y = x / scale[:, None]
    total = 0.0
    for i, j, w in g.edges:
        diff = y[i] - y[j]
        total += w * float(diff @ diff)
    return 0.5 * total


def dirichlet_spectral(x: np.ndarray, spec: Spectrum) -> float:
    """sum_i (1 - lambda_i) ||B_i||^2 for a spectrum of A_sym"""
    x = _as_matrix(x)
    b = spec.basis.T @ x
    return float(np.sum((1.0 - spec.eigenvalues) * np.sum(b * b, axis=1)))


def _select_rank_one(x: np.ndarray):
    """Dominant column u and signed dominant row v; ties resolve to the lowest index"""
    i = int(np.argmax(np.linalg.norm(x, axis=0)))
    j = int(np.argmax(np.linalg.norm(x, axis=1)))
    u = x[:, i]
    v = x[j, :] if x[j, i] > 0 else -x[j, :]
    if not np.any(u) or not np.any(v):
        raise DegenerateInputError(f"selected column {i} or row {j} is zero")
    return u, v


def rank_one_distance(x: np.ndarray, norm: RodNorm | str = RodNorm.SPECTRAL) -> float:
    """Nuclear norm of x/||x|| - uv^T/||uv^T|| with the selected dominant column and row"""
    norm = RodNorm(norm)
    x = _as_matrix(x)
    if not np.any(x):
        raise DegenerateInputError("rank-one distance of the zero matrix")
    u, v = _select_rank_one(x)
    surrogate = np.outer(u, v)
    order = 2 if norm is RodNorm.SPECTRAL else "fro"
    diff = x / np.linalg.norm(x, order) - surrogate / np.linalg.norm(surrogate, order)
    return float(np.linalg.norm(diff, "nuc"))


def rank_one_distance_svd(x: np.ndarray, norm: RodNorm | str = RodNorm.SPECTRAL) -> float:
    """Same distance against the best rank-one approximation sigma_1 u_1 v_1^T"""
    norm = RodNorm(norm)
    x = _as_matrix(x)
    if not np.any(x):
        raise DegenerateInputError("rank-one distance of the zero matrix")
    left, sigma, right = np.linalg.svd(x, full_matrices=False)
    best = np.outer(left[:, 0], right[0])
    scale = sigma[0] if norm is RodNorm.SPECTRAL else float(np.sqrt(np.sum(sigma ** 2)))
    return float(np.linalg.norm(x / scale - best, "nuc"))


def frobenius(x: np.ndarray) -> float:
    return float(np.linalg.norm(_as_matrix(x)))


def energy_contraction_factor(a_sym: np.ndarray, w: np.ndarray, squared: bool = False) -> float:
    """
    sigma_1(W)^2 * lambda where lambda = max_{i>=2} |lambda_i(A_sym)|.

    E(phi(A_sym X W)) <= factor * E(X) for ReLU/LeakyReLU; squared=True gives
    the tighter lambda^2 form.
    """
    lam = np.sort(np.linalg.eigvalsh(a_sym))[::-1]
    lam2 = float(np.max(np.abs(lam[1:]))) if lam.size > 1 else 0.0
    sigma1 = float(np.linalg.norm(w, 2))
    return sigma1 ** 2 * (lam2 ** 2 if squared else lam2)


def trace_metrics(step: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, iters: int,
                  which: Iterable[TraceMetric | str], g: Graph | None = None,
                  laplacians: Dict[TraceMetric, np.ndarray] | None = None,
                  rod_norm: RodNorm | str = RodNorm.SPECTRAL) -> MetricTrace:
    """
    Apply step repeatedly and record metrics at iteration 0 and after every step.

    Energies use the normalized state X/||X||_F. Laplacians come from g unless
    given explicitly. The run stops early with trace.overflow set when ||X||_F
    leaves [1e-150, 1e150].
    """
    if iters < 1:
        raise InvalidParameterError(f"iters must be >= 1, got {iters}")
    which = [TraceMetric(m) for m in which]
    rod_norm = RodNorm(rod_norm)
    laps = dict(laplacians or {})
    for metric in which:
        if metric in (TraceMetric.E_L, TraceMetric.E_SYM) and metric not in laps:
            if g is None:
                raise InvalidParameterError(f"{metric.value} needs a graph or an explicit laplacian")
            if metric is TraceMetric.E_L:
                a = g.adjacency()
                laps[metric] = np.diag(a.sum(axis=1)) - a
            else:
                laps[metric] = np.eye(g.n) - normalize(g, NormKind.SYM).matrix

    trace = MetricTrace(metadata={"rod_norm": rod_norm.value, "iters": iters})
    x = _as_matrix(x0)
    _record(trace, 0, x, which, laps, rod_norm)
    for iteration in range(1, iters + 1):
        try:
            x = _as_matrix(step(x))
        except Exception as e:
            raise StepError(iteration, e) from e
        fro = float(np.linalg.norm(x)) if np.all(np.isfinite(x)) else math.inf
        if not (OVERFLOW_LOWER <= fro <= OVERFLOW_UPPER):
            logger.warning(f"State norm {fro:.3e} left the guarded range at iteration {iteration}; stopping")
            for metric in which:
                trace.append(iteration, metric.value, math.inf)
            trace.overflow = True
            trace.metadata["stopped_at"] = iteration
            break
        _record(trace, iteration, x, which, laps, rod_norm)
    return trace


def _record(trace: MetricTrace, iteration: int, x: np.ndarray, which, laps, rod_norm: RodNorm) -> None:
    for metric in which:
        if metric is TraceMetric.FROB:
            value = frobenius(x)
        elif metric is TraceMetric.ROD:
            value = rank_one_distance(x, rod_norm)
        else:
            value = dirichlet_normalized(x, laps[metric])
        trace.append(iteration, metric.value, value)
    logger.debug(f"iteration {iteration}: " + ", ".join(f"{name}={value:.3e}" for _, name, value in
                                                        trace.records[-len(which):]))
