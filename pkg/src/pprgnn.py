"""
PageRank reference, PPRGNN forward fixed point and its truncated analytic backward pass

Forward recursion at depth l:
    Z^(k) = alpha^(k,l) A H^(k-1) W + H0,   H^(k) = phi(Z^(k)),   k = 1..l
    alpha^(k,l) = 1 / ((1 + l - k) * epsilon)
with Z^(0) = H0 and H^(0) = phi(H0) unless a warm start is given.
"""
import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, TextIO, Tuple

import numpy as np
import scipy.linalg

from .config import (FINITE_DIFF_STEP, KINK_MARGIN, OVERFLOW_UPPER, PPR_MAX_ITER, PPR_TOL, PPRGNN_ACTIVATION,
                     PPRGNN_EPSILON, PPRGNN_GAMMA, PPRGNN_LOOKAHEAD, PPRGNN_MAX_DEPTH, PPRGNN_TRUNCATION)
from .errors import (ConvergenceError, DimensionMismatchError, InvalidParameterError, NumericalOverflowError)
from .logger import get_logger
from .models import Activation, AggregationMatrix, NormKind

logger = get_logger("pprgnn")


def _matrix(a_pr: AggregationMatrix | np.ndarray) -> np.ndarray:
    return a_pr.matrix if isinstance(a_pr, AggregationMatrix) else np.asarray(a_pr, dtype=float)


def _check_column_stochastic(a_pr: AggregationMatrix | np.ndarray) -> np.ndarray:
    if isinstance(a_pr, AggregationMatrix) and a_pr.kind is not NormKind.PR:
        raise InvalidParameterError(f"PageRank needs a pr-normalized matrix, got {a_pr.kind.value}")
    m = _matrix(a_pr)
    sums = m.sum(axis=0)
    bad = np.flatnonzero((np.abs(sums) > 0) & (np.abs(sums - 1.0) > 1e-10))
    if bad.size:
        raise InvalidParameterError(f"column {int(bad[0])} sums to {sums[bad[0]]}, matrix is not column-stochastic")
    return m


# Classical PageRank

def pagerank(a_pr: AggregationMatrix | np.ndarray, r0: np.ndarray, iters: int) -> np.ndarray:
    """r^(k) = A_pr r^(k-1), returned after iters steps"""
    m = _check_column_stochastic(a_pr)
    r = np.asarray(r0, dtype=float).copy()
    if np.any(r < 0):
        logger.warning("PageRank start vector has negative entries; 1-norm is not preserved")
    for _ in range(iters):
        r = m @ r
    return r


def personalized_pagerank(a_pr: AggregationMatrix | np.ndarray, r0: np.ndarray, alpha: float,
                          tol: float = PPR_TOL, max_iter: int = PPR_MAX_ITER) -> np.ndarray:
    """Fixed point of s = (1 - alpha) A_pr s + alpha r0 by iteration, L1 residual below tol"""
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"restart probability must lie in (0, 1), got {alpha}")
    m = _check_column_stochastic(a_pr)
    r0 = np.asarray(r0, dtype=float)
    s = r0.copy()
    for it in range(1, max_iter + 1):
        s = (1.0 - alpha) * (m @ s) + alpha * r0
        residual = float(np.sum(np.abs(s - (1.0 - alpha) * (m @ s) - alpha * r0)))
        if residual <= tol:
            logger.debug(f"PPR converged after {it} iterations (residual {residual:.2e})")
            return s
    raise ConvergenceError(f"PPR did not reach tol={tol} in {max_iter} iterations", best=s, iterations=max_iter)


def ppr_direct(a_pr: AggregationMatrix | np.ndarray, r0: np.ndarray, alpha: float) -> np.ndarray:
    """Direct solve of (I - (1 - alpha) A_pr) s = alpha r0"""
    m = _matrix(a_pr)
    return scipy.linalg.solve(np.eye(m.shape[0]) - (1.0 - alpha) * m, alpha * np.asarray(r0, dtype=float))


def ppr_geometric(a_pr: AggregationMatrix | np.ndarray, r0: np.ndarray, alpha: float, k: int) -> np.ndarray:
    """sum_{i=0}^{k} alpha (1 - alpha)^i A_pr^i r0"""
    m = _matrix(a_pr)
    term = np.asarray(r0, dtype=float).copy()
    total = alpha * term
    for i in range(1, k + 1):
        term = m @ term
        total = total + alpha * (1.0 - alpha) ** i * term
    return total


def appnp_step(agg: np.ndarray, h: np.ndarray, h0: np.ndarray, alpha: float) -> np.ndarray:
    return (1.0 - alpha) * (agg @ h) + alpha * h0


def appnp(agg: np.ndarray, h0: np.ndarray, alpha: float, iters: int) -> np.ndarray:
    """Fixed-alpha propagation H <- (1 - alpha) A H + alpha H0"""
    h0 = np.asarray(h0, dtype=float)
    h = h0
    for _ in range(iters):
        h = appnp_step(agg, h, h0, alpha)
    return h


# PPRGNN

@dataclass(frozen=True)
class PprgnnConfig:
    epsilon: float = PPRGNN_EPSILON
    gamma: float = PPRGNN_GAMMA
    max_depth: int = PPRGNN_MAX_DEPTH
    m: int = PPRGNN_TRUNCATION
    j: int = PPRGNN_LOOKAHEAD
    activation: Activation = Activation(PPRGNN_ACTIVATION)

    def __post_init__(self):
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.epsilon <= 0 or self.gamma <= 0:
            raise InvalidParameterError(f"epsilon and gamma must be positive, got {self.epsilon}, {self.gamma}")
        if self.m < 1 or self.j < 0 or self.max_depth < 1:
            raise InvalidParameterError(f"need m >= 1, j >= 0, max_depth >= 1; got {self.m}, {self.j}, "
                                        f"{self.max_depth}")

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "PprgnnConfig":
        known = {"epsilon", "gamma", "max_depth", "m", "j", "activation"}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown PPRGNN config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except ValueError as e:
            raise InvalidParameterError(str(e)) from e

    def alpha(self, k: int, depth: int) -> float:
        return 1.0 / ((1 + depth - k) * self.epsilon)


@dataclass
class PprgnnCache:
    """Checkpointed states H^(k) and pre-activations Z^(k), k = 0..depth"""
    depth: int
    states: List[np.ndarray]
    pre: List[np.ndarray]
    agg: np.ndarray
    w: np.ndarray
    h0: np.ndarray
    warm_started: bool = False

    @property
    def output(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class DepthEstimate:
    depth: int
    capped: bool
    norms: List[float] = field(default_factory=list)


def _check_shapes(agg: np.ndarray, w: np.ndarray, h0: np.ndarray) -> None:
    if agg.ndim != 2 or agg.shape[0] != agg.shape[1] or agg.shape[0] != h0.shape[0]:
        raise DimensionMismatchError(f"aggregation {agg.shape} does not match state {h0.shape}")
    if w.shape != (h0.shape[1], h0.shape[1]):
        raise DimensionMismatchError(f"weight {w.shape} must be square with side {h0.shape[1]}")


def estimate_depth(agg: np.ndarray, w: np.ndarray, h0: np.ndarray, cfg: PprgnnConfig) -> DepthEstimate:
    """Smallest k >= 1 with ||G^(k)||_F <= gamma where G^(k) = phi(alpha^(1,k) A G^(k-1) W), G^(0) = h0"""
    agg, w, g = np.asarray(agg, float), np.asarray(w, float), np.asarray(h0, float)
    _check_shapes(agg, w, g)
    norms = []
    for k in range(1, cfg.max_depth + 1):
        g = cfg.activation.apply((agg @ g @ w) / (k * cfg.epsilon))
        norms.append(float(np.linalg.norm(g)))
        if norms[-1] <= cfg.gamma:
            logger.debug(f"depth estimate {k} (||G|| = {norms[-1]:.3e})")
            return DepthEstimate(depth=k, capped=False, norms=norms)
    logger.warning(f"depth estimate hit max_depth={cfg.max_depth} with ||G|| = {norms[-1]:.3e}")
    return DepthEstimate(depth=cfg.max_depth, capped=True, norms=norms)


def forward(agg: np.ndarray, w: np.ndarray, h0: np.ndarray, cfg: PprgnnConfig, depth: int,
            warm_start: np.ndarray | None = None) -> Tuple[np.ndarray, PprgnnCache]:
    if depth < 1:
        raise InvalidParameterError(f"depth must be >= 1, got {depth}")
    agg, w, h0 = np.asarray(agg, float), np.asarray(w, float), np.asarray(h0, float)
    _check_shapes(agg, w, h0)
    phi = cfg.activation
    h = phi.apply(h0) if warm_start is None else np.asarray(warm_start, dtype=float)
    if h.shape != h0.shape:
        raise DimensionMismatchError(f"warm start {h.shape} does not match H0 {h0.shape}")
    states, pre = [h], [h0]
    for k in range(1, depth + 1):
        z = cfg.alpha(k, depth) * (agg @ h @ w) + h0
        h = phi.apply(z)
        norm = float(np.linalg.norm(h))
        if not math.isfinite(norm) or norm > OVERFLOW_UPPER:
            raise NumericalOverflowError(f"PPRGNN state norm {norm:.3e} overflowed", iteration=k)
        pre.append(z)
        states.append(h)
    cache = PprgnnCache(depth=depth, states=states, pre=pre, agg=agg, w=w, h0=h0,
                        warm_started=warm_start is not None)
    return h, cache


def backward(cache: PprgnnCache, grad_h: np.ndarray, cfg: PprgnnConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of a loss on H w.r.t. H0 and W.

    The forward pass is recomputed at depth l' = l + j and the recursion runs
    back over min(l', m) + 1 checkpoints; m >= l' gives the exact gradient of
    the depth-l' output.
    """
    grad_h = np.asarray(grad_h, dtype=float)
    if grad_h.shape != cache.output.shape:
        raise DimensionMismatchError(f"gradient {grad_h.shape} does not match output {cache.output.shape}")
    if cfg.j > 0:
        warm = cache.states[0] if cache.warm_started else None
        _, cache = forward(cache.agg, cache.w, cache.h0, cfg, cache.depth + cfg.j, warm_start=warm)
    depth = cache.depth
    phi = cfg.activation
    agg_t, w_t = cache.agg.T, cache.w.T

    grad_h0 = np.zeros_like(cache.h0)
    grad_w = np.zeros_like(cache.w)
    d_h = grad_h
    for back in range(min(depth, cfg.m) + 1):
        k = depth - back
        d_z = d_h * phi.derivative(cache.pre[k])
        if k == 0:
            if not cache.warm_started:
                grad_h0 += d_z
            break
        grad_h0 += d_z
        alpha = cfg.alpha(k, depth)
        grad_w += alpha * (cache.states[k - 1].T @ agg_t @ d_z)
        d_h = alpha * (agg_t @ d_z @ w_t)
    return grad_h0, grad_w


def finite_diff(fwd: Callable[[np.ndarray, np.ndarray], float], h0: np.ndarray, w: np.ndarray,
                step: float = FINITE_DIFF_STEP) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences of a scalar loss in every entry of h0 and w"""
    if step <= 0:
        raise InvalidParameterError(f"finite-difference step must be positive, got {step}")
    h0 = np.asarray(h0, dtype=float)
    w = np.asarray(w, dtype=float)

    def central(target: np.ndarray, evaluate: Callable[[np.ndarray], float]) -> np.ndarray:
        grad = np.zeros_like(target)
        for idx in np.ndindex(target.shape):
            plus, minus = target.copy(), target.copy()
            plus[idx] += step
            minus[idx] -= step
            grad[idx] = (evaluate(plus) - evaluate(minus)) / (2.0 * step)
        return grad

    return central(h0, lambda h: fwd(h, w)), central(w, lambda ww: fwd(h0, ww))


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / scale


@dataclass
class GradCheckReport:
    rows: List[Tuple[str, float, float, float]]
    rel_err_h0: float
    rel_err_w: float
    kink: bool

    @property
    def passed(self) -> bool:
        return self.kink or max(self.rel_err_h0, self.rel_err_w) < 1e-5

    def to_csv(self, sink: TextIO) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["param", "analytic", "numeric", "rel_err"])
        for name, analytic, numeric, err in self.rows:
            writer.writerow([name, repr(analytic), repr(numeric), repr(err)])


def gradcheck(agg: np.ndarray, w: np.ndarray, h0: np.ndarray, cfg: PprgnnConfig, depth: int,
              probe: np.ndarray, step: float = FINITE_DIFF_STEP) -> GradCheckReport:
    """
    Compare backward() with central differences of loss = sum(probe * H).

    ReLU runs whose pre-activations come within 1e-3 of zero are marked as
    kinks and do not count as failures.
    """
    exact = PprgnnConfig(epsilon=cfg.epsilon, gamma=cfg.gamma, max_depth=cfg.max_depth,
                         m=max(cfg.m, depth + cfg.j), j=cfg.j, activation=cfg.activation)
    _, cache = forward(agg, w, h0, exact, depth)
    grad_h0, grad_w = backward(cache, probe, exact)

    full_depth = depth + exact.j

    def loss(hh: np.ndarray, ww: np.ndarray) -> float:
        out, _ = forward(agg, ww, hh, exact, full_depth)
        return float(np.sum(probe * out))

    num_h0, num_w = finite_diff(loss, h0, w, step)
    _, full_cache = forward(agg, w, h0, exact, full_depth)
    kink = cfg.activation is Activation.RELU and any(np.any(np.abs(z) < KINK_MARGIN) for z in full_cache.pre)
    if kink:
        logger.warning("ReLU pre-activation near the kink; gradient check excluded from pass/fail")

    rows = []
    for name, analytic, numeric in (("H0", grad_h0, num_h0), ("W", grad_w, num_w)):
        for idx in np.ndindex(analytic.shape):
            a, b = float(analytic[idx]), float(numeric[idx])
            rows.append((f"{name}[{','.join(map(str, idx))}]", a, b, abs(a - b) / max(abs(a), abs(b), 1e-12)))
    return GradCheckReport(rows=rows, rel_err_h0=relative_error(grad_h0, num_h0),
                           rel_err_w=relative_error(grad_w, num_w), kink=kink)
