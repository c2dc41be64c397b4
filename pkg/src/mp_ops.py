"""
Linear message-passing operators, their Kronecker forms and SCA/CD analyzers

vec() is column-major throughout, so vec(A X W) = (W^T kron A) vec(X).
"""
import base64
import json
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.special import softmax

from . import config
from .config import POWER_MAX_ITER, POWER_TOL, SCA_TOL, ZERO_COMPONENT_TOL
from .errors import (DegenerateInputError, DimensionMismatchError, InvalidParameterError, SizeCapError,
                     VerificationError)
from .logger import get_logger
from .models import Activation, KroneckerOperator, MetricTrace, OperatorBundle, Spectrum
from .spectral import eigendecompose_sym

logger = get_logger("mp_ops")


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape((n, -1), order="F")


def step(b: OperatorBundle, x: np.ndarray) -> np.ndarray:
    """phi(sum_i A_i x W_i)"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape != (b.n, b.d):
        raise DimensionMismatchError(f"state of shape {x.shape}, bundle expects ({b.n}, {b.d})")
    total = np.zeros((b.n, b.c))
    for agg, weight in b.terms:
        total += agg @ x @ weight
    return b.activation.apply(total)


def vectorize(b: OperatorBundle, max_dense: int | None = None) -> KroneckerOperator:
    """T = sum_i W_i^T kron A_i; refuses when n*d or n*c exceeds the dense cap"""
    cap = config.MAX_DENSE if max_dense is None else max_dense
    size = b.n * max(b.d, b.c)
    if size > cap:
        raise SizeCapError(f"vectorized operator needs {size} rows/cols, cap is {cap} (set MPLAB_MAX_DENSE)")
    t = np.zeros((b.n * b.c, b.n * b.d))
    for agg, weight in b.terms:
        t += np.kron(weight.T, agg)
    return KroneckerOperator(t=t, n=b.n, d=b.d, c=b.c)


# Bundle builders

def single_term(agg: np.ndarray, weight: np.ndarray, activation: Activation | str = Activation.IDENTITY
                ) -> OperatorBundle:
    return OperatorBundle(terms=((np.asarray(agg, float), np.asarray(weight, float)),),
                          activation=Activation(activation))


def skp_bundle(aggs: Sequence[np.ndarray], weights: Sequence[np.ndarray],
               activation: Activation | str = Activation.IDENTITY) -> OperatorBundle:
    if len(aggs) != len(weights):
        raise DimensionMismatchError(f"{len(aggs)} aggregations but {len(weights)} weights")
    return OperatorBundle(terms=tuple((np.asarray(a, float), np.asarray(w, float)) for a, w in zip(aggs, weights)),
                          activation=Activation(activation))


def sage_bundle(a_rw: np.ndarray, w_self: np.ndarray, w_neigh: np.ndarray,
                activation: Activation | str = Activation.RELU) -> OperatorBundle:
    """x W_self + A_rw x W_neigh as a two-term bundle"""
    return skp_bundle([np.eye(a_rw.shape[0]), a_rw], [w_self, w_neigh], activation)


def gcn_bundle(a_sym: np.ndarray, w: np.ndarray, activation: Activation | str = Activation.RELU) -> OperatorBundle:
    return single_term(a_sym, w, activation)


def res_gcn_step(b: OperatorBundle, x: np.ndarray) -> np.ndarray:
    """phi(sum_i A_i x W_i) + x; needs d == c"""
    if b.d != b.c:
        raise DimensionMismatchError(f"residual step needs square weights, got ({b.d}, {b.c})")
    return step(b, x) + np.asarray(x, dtype=float)


def row_stochastic_bundle(support: np.ndarray, w: np.ndarray, rng: np.random.Generator,
                          min_entry: float) -> OperatorBundle:
    """
    Random row-stochastic aggregation on the support with every supported entry
    at least min_entry (clipped to half the uniform weight on dense rows).
    """
    support = np.asarray(support, dtype=bool)
    if not support.any(axis=1).all():
        raise DegenerateInputError("row-stochastic aggregation needs every row supported")
    agg = np.zeros(support.shape)
    for i, row in enumerate(support):
        cols = np.flatnonzero(row)
        floor = min(min_entry, 0.5 / cols.size)
        agg[i, cols] = floor + (1.0 - floor * cols.size) * rng.dirichlet(np.ones(cols.size))
    return single_term(agg, w)


def random_skp_bundle(support: np.ndarray, r: int, d: int, rng: np.random.Generator,
                      activation: Activation | str = Activation.IDENTITY) -> OperatorBundle:
    """r Gaussian aggregations on the support, each scaled to spectral norm 1, with N(0, 1/d) weights"""
    support = np.asarray(support, dtype=bool)
    aggs, weights = [], []
    for _ in range(r):
        agg = rng.standard_normal(support.shape) * support
        norm = np.linalg.norm(agg, 2)
        aggs.append(agg / norm if norm > 0 else agg)
        weights.append(rng.standard_normal((d, d)) / np.sqrt(d))
    return skp_bundle(aggs, weights, activation)


def masked_row_softmax(scores: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Row-wise softmax over support entries; rows without support stay zero"""
    support = np.asarray(support, dtype=bool)
    masked = np.where(support, scores, -np.inf)
    out = np.zeros_like(scores, dtype=float)
    rows = support.any(axis=1)
    out[rows] = softmax(masked[rows], axis=1)
    return out


def softmax_skp(b: OperatorBundle, support: np.ndarray) -> OperatorBundle:
    """Replace every aggregation by its masked row softmax"""
    support = np.asarray(support, dtype=bool)
    if support.shape != (b.n, b.n):
        raise DimensionMismatchError(f"support of shape {support.shape}, expected ({b.n}, {b.n})")
    return OperatorBundle(terms=tuple((masked_row_softmax(agg, support), w) for agg, w in b.terms),
                          activation=b.activation)


def anti_sca_bundle(v: np.ndarray) -> OperatorBundle:
    """
    SKP that keeps the rank-r target V fixed while shrinking every other input.

    A_i = v_i v_i^T / ||v_i v_i^T||_F and W_i = E_ii, so step(V) = V while
    step(P) projects each column of P onto the matching column of V.
    """
    v = np.asarray(v, dtype=float)
    n, r = v.shape
    if np.linalg.matrix_rank(v) < r:
        raise DegenerateInputError("target must have full column rank")
    aggs, weights = [], []
    for i in range(r):
        outer = np.outer(v[:, i], v[:, i])
        aggs.append(outer / np.linalg.norm(outer))
        e = np.zeros((r, r))
        e[i, i] = 1.0
        weights.append(e)
    return skp_bundle(aggs, weights)


def bundle_to_json(b: OperatorBundle) -> str:
    def encode(m: np.ndarray) -> dict:
        data = np.ascontiguousarray(m, dtype="<f8")
        return {"shape": list(data.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}

    return json.dumps({"activation": b.activation.value,
                       "terms": [{"agg": encode(a), "weight": encode(w)} for a, w in b.terms]}, sort_keys=True)


def bundle_from_json(text: str) -> OperatorBundle:
    def decode(entry: dict) -> np.ndarray:
        raw = base64.b64decode(entry["data"])
        return np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).astype(float)

    try:
        payload = json.loads(text)
        terms = tuple((decode(t["agg"]), decode(t["weight"])) for t in payload["terms"])
        activation = Activation(payload.get("activation", "identity"))
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidParameterError(f"malformed bundle JSON: {e}") from e
    return OperatorBundle(terms=terms, activation=activation)


# Shared component amplification

@dataclass(frozen=True)
class ScaRatio:
    """Directly measured amplification ratio and its closed-form prediction"""
    i: int
    j: int
    numerator: float
    denominator: float
    expected: float
    defined: bool = True

    @property
    def ratio(self) -> float:
        return self.numerator / self.denominator if self.defined else float("nan")


def _check_index(k: int, n: int) -> int:
    if not 1 <= k <= n:
        raise InvalidParameterError(f"component index {k} outside 1..{n}")
    return k - 1


def _amplification(a: np.ndarray, w: np.ndarray, basis_vector: np.ndarray) -> float:
    """||(W^T kron A)(I_d kron b)||_F"""
    d = w.shape[0]
    if a.shape[0] * max(w.shape) > config.MAX_DENSE:
        raise SizeCapError(f"Kronecker product of size {a.shape[0] * max(w.shape)} exceeds the cap")
    op = np.kron(w.T, a) @ np.kron(np.eye(d), basis_vector[:, None])
    return float(np.linalg.norm(op))


def _verify_ratio(result: ScaRatio, label: str) -> ScaRatio:
    if result.defined:
        gap = abs(result.ratio - result.expected)
        if gap > SCA_TOL * max(1.0, abs(result.expected)):
            raise VerificationError(f"{label}: measured ratio {result.ratio!r} differs from "
                                    f"{result.expected!r} by {gap:.3e}")
    return result


def sca_ratio_sym(a_sym: np.ndarray, w: np.ndarray, i: int, j: int) -> ScaRatio:
    """Amplification of eigen-components i and j (1-based, descending) by one GCN step; equals |l_i|/|l_j|"""
    spec = eigendecompose_sym(a_sym)
    ii, jj = _check_index(i, spec.n), _check_index(j, spec.n)
    lam_i, lam_j = abs(spec.eigenvalues[ii]), abs(spec.eigenvalues[jj])
    num = _amplification(a_sym, w, spec.basis[:, ii])
    den = _amplification(a_sym, w, spec.basis[:, jj])
    if lam_j <= ZERO_COMPONENT_TOL:
        logger.warning(f"eigenvalue {j} is zero; SCA ratio undefined (|lambda_{i}| = {lam_i:.6g})")
        return ScaRatio(i, j, num, den, expected=float("nan"), defined=False)
    return _verify_ratio(ScaRatio(i, j, num, den, expected=lam_i / lam_j), "sca_ratio_sym")


def sca_ratio_svd(a: np.ndarray, w: np.ndarray, i: int, j: int) -> ScaRatio:
    """Amplification of right singular vectors i and j (1-based); equals sigma_i/sigma_j"""
    a = np.asarray(a, dtype=float)
    _, sigma, right_t = np.linalg.svd(a)
    ii, jj = _check_index(i, sigma.size), _check_index(j, sigma.size)
    if sigma[jj] <= ZERO_COMPONENT_TOL:
        raise DegenerateInputError(f"singular value {j} is zero", index=j)
    num = _amplification(a, w, right_t[ii])
    den = _amplification(a, w, right_t[jj])
    return _verify_ratio(ScaRatio(i, j, num, den, expected=float(sigma[ii] / sigma[jj])), "sca_ratio_svd")


def cd_trace(bundle_seq: Sequence[OperatorBundle], bases: Sequence[np.ndarray]) -> MetricTrace:
    """
    Component dominance over iterations.

    For every base block P_i records ||T^(l)...T^(1)(I_d kron P_i)||_F divided by the
    largest such norm over all blocks, as metric "block_<i>" (1-based).
    """
    if not bundle_seq:
        raise InvalidParameterError("cd_trace needs at least one bundle")
    shared = bundle_seq[0].terms[0][0]
    for b in bundle_seq:
        if len(b.terms) != 1 or b.activation is not Activation.IDENTITY:
            raise InvalidParameterError("cd_trace takes linear single-term bundles")
        if not np.array_equal(b.terms[0][0], shared):
            raise InvalidParameterError("cd_trace bundles must share one aggregation matrix")
    n, d = bundle_seq[0].n, bundle_seq[0].d
    blocks = [np.asarray(p, dtype=float).reshape(n, -1) for p in bases]
    if sum(p.shape[1] for p in blocks) != n:
        raise DimensionMismatchError("base blocks must together span R^n")

    # states[i] has one n x d slab per (column of P_i, channel k): p e_k^T
    states = []
    for p in blocks:
        slabs = np.zeros((p.shape[1] * d, n, d))
        for col in range(p.shape[1]):
            for k in range(d):
                slabs[col * d + k, :, k] = p[:, col]
        states.append(slabs)

    trace = MetricTrace(metadata={"blocks": len(blocks)})
    for level, b in enumerate(bundle_seq, start=1):
        agg, weight = b.terms[0]
        if weight.shape[0] != states[0].shape[2]:
            raise DimensionMismatchError(f"weight {weight.shape} does not chain at iteration {level}")
        states = [agg @ s @ weight for s in states]
        norms = np.array([np.linalg.norm(s) for s in states])
        top = float(norms.max())
        for idx, value in enumerate(norms, start=1):
            trace.append(level, f"block_{idx}", value / top if top > 0 else 0.0)
    return trace


@dataclass
class PowerIterationResult:
    vector: np.ndarray
    eigenvalue: float
    iterations: int
    converged: bool
    oscillating: bool = False
    residual: float = float("inf")
    reached_dominant: bool | None = None


def power_iteration(t: KroneckerOperator | np.ndarray, x0: np.ndarray, tol: float = POWER_TOL,
                    max_iter: int = POWER_MAX_ITER, verify: bool = False) -> PowerIterationResult:
    """
    Normalized power iteration with Rayleigh-quotient stopping.

    Returns the best iterate with converged=False when max_iter runs out;
    oscillating is set when successive iterates alternate sign (negative
    dominant eigenvalue). With verify the result is compared against the
    spectral radius from a full eigensolve and reached_dominant is set;
    otherwise reached_dominant stays None.
    """
    matrix = t.t if isinstance(t, KroneckerOperator) else np.asarray(t, dtype=float)
    if matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"power iteration needs a square operator, got {matrix.shape}")
    x = np.asarray(x0, dtype=float).ravel()
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise DegenerateInputError("initial vector is zero")
    x = x / norm

    best = PowerIterationResult(vector=x, eigenvalue=0.0, iterations=0, converged=False)
    flips = 0
    for it in range(1, max_iter + 1):
        y = matrix @ x
        lam = float(x @ y)
        residual = float(np.linalg.norm(y - lam * x))
        if residual < best.residual:
            best = PowerIterationResult(vector=x.copy(), eigenvalue=lam, iterations=it, converged=False,
                                        residual=residual)
        if residual <= tol:
            best.converged = True
            break
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            logger.warning("iterate mapped to zero; operator is nilpotent on this start")
            break
        y = y / y_norm
        flips = flips + 1 if float(y @ x) < 0 else 0
        x = y

    best.oscillating = best.eigenvalue < 0 or flips >= 2
    if best.oscillating:
        logger.warning("power iteration alternates sign: dominant eigenvalue is negative")
    if not best.converged:
        logger.warning(f"power iteration hit max_iter={max_iter} with residual {best.residual:.3e}")
    if verify:
        radius = float(np.max(np.abs(np.linalg.eigvals(matrix))))
        best.reached_dominant = abs(abs(best.eigenvalue) - radius) <= max(tol, 1e-8) * max(1.0, radius)
        if not best.reached_dominant:
            logger.warning(f"converged to eigenvalue {best.eigenvalue:.6g} below the spectral radius {radius:.6g}; "
                           "start vector lacks the dominant component")
    return best


# MIMO graph convolution

def mimo_gc_apply(spec: Spectrum, weights: Sequence[np.ndarray], x: np.ndarray) -> np.ndarray:
    """sum_k U_k U_k^T x W_k"""
    if len(weights) != spec.n:
        raise DimensionMismatchError(f"{len(weights)} weights for {spec.n} spectral components")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != spec.n:
        raise DimensionMismatchError(f"signal of shape {x.shape} for {spec.n} nodes")
    stack = np.stack([np.asarray(w, dtype=float) for w in weights])
    if stack.shape[1] != x.shape[1]:
        raise DimensionMismatchError(f"weights take {stack.shape[1]} features, signal has {x.shape[1]}")
    coeffs = np.einsum("kd,kdc->kc", spec.basis.T @ x, stack)
    return spec.basis @ coeffs


def mimo_gc_fit(spec: Spectrum, x: np.ndarray, target: np.ndarray) -> List[np.ndarray]:
    """Least-norm W_k with d_k^T W_k = c_k per Fourier row; exact whenever every d_k is nonzero"""
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    if x.shape[0] != spec.n or target.shape[0] != spec.n:
        raise DimensionMismatchError(f"signal {x.shape} / target {target.shape} for {spec.n} nodes")
    d_rows = spec.basis.T @ x
    c_rows = spec.basis.T @ target
    weights = []
    for k in range(spec.n):
        d_k = d_rows[k]
        sq = float(d_k @ d_k)
        if np.sqrt(sq) < ZERO_COMPONENT_TOL:
            raise DegenerateInputError(f"Fourier component {k + 1} of the input is zero", index=k + 1)
        weights.append(np.outer(d_k, c_rows[k]) / sq)
    return weights


def gcn_mimo_weights(spec: Spectrum, w: np.ndarray) -> List[np.ndarray]:
    """W_k = lambda_k W reproduces A_sym x W"""
    return [lam * np.asarray(w, dtype=float) for lam in spec.eigenvalues]


def polynomial_mimo_weights(spec: Spectrum, vs: Sequence[np.ndarray]) -> List[np.ndarray]:
    """W_k = sum_p lambda_k^p V_p reproduces sum_p A_sym^p x V_p"""
    return [sum(lam ** p * np.asarray(v, dtype=float) for p, v in enumerate(vs)) for lam in spec.eigenvalues]
