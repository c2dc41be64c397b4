"""
Adam, losses with analytic gradients, and the two toy training tasks

Gradients are accumulated by hand in reverse over the fixed sequence of
matrix products of each model.
"""
import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Sequence, TextIO, Tuple

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .config import (ADAM_BETA1, ADAM_BETA2, ADAM_EPS_HAT, ADAM_LR, FINITE_DIFF_STEP, FIT_TARGET_LRS,
                     FIT_TARGET_STEPS, SYNTHETIC_LOG_EVERY)
from .errors import DimensionMismatchError, InvalidParameterError
from .graph_core import erdos_renyi, normalize
from .logger import get_logger
from .models import NormKind
from .mp_ops import mimo_gc_apply, mimo_gc_fit
from .pprgnn import relative_error
from .seeding import named_rng
from .spectral import eigendecompose_sym

logger = get_logger("optim")

SYNTHETIC_LABELS = np.array([[1, 1, 1],
                             [1, 0, 0],
                             [0, 1, 0],
                             [0, 0, 1]], dtype=float)
SYNTHETIC_FEATURES = 6


# Optimizer

@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps_hat: float = ADAM_EPS_HAT
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = ADAM_LR, **hyper) -> "AdamState":
        if lr <= 0:
            raise InvalidParameterError(f"learning rate must be positive, got {lr}")
        return cls(m=[np.zeros_like(p, dtype=float) for p in params],
                   v=[np.zeros_like(p, dtype=float) for p in params], lr=lr, **hyper)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> List[np.ndarray]:
    """One bias-corrected Adam update; returns new arrays and advances state in place"""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionMismatchError(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment slots")
    for p, g, m in zip(params, grads, state.m):
        if np.shape(p) != np.shape(g) or np.shape(p) != m.shape:
            raise DimensionMismatchError(f"gradient of shape {np.shape(g)} for parameter of shape {np.shape(p)}")
        if np.any(np.isnan(g)):
            raise InvalidParameterError("NaN in gradient")
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    updated = []
    for idx, (p, g) in enumerate(zip(params, grads)):
        state.m[idx] = state.beta1 * state.m[idx] + (1.0 - state.beta1) * g
        state.v[idx] = state.beta2 * state.v[idx] + (1.0 - state.beta2) * g * g
        m_hat = state.m[idx] / correction1
        v_hat = state.v[idx] / correction2
        updated.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat))
    return updated


# Losses: each returns (mean loss, gradient w.r.t. the first argument)

def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise DimensionMismatchError(f"shapes {np.shape(a)} and {np.shape(b)} differ")


def sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def mse(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    _same_shape(pred, target)
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def bce_sigmoid(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    logits, labels = np.asarray(logits, dtype=float), np.asarray(labels, dtype=float)
    _same_shape(logits, labels)
    if np.any((labels < 0) | (labels > 1)):
        raise InvalidParameterError("labels must lie in [0, 1]")
    value = np.mean(np.logaddexp(0.0, logits) - labels * logits)
    return float(value), (sigmoid(logits) - labels) / logits.size


def ce_softmax(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy over rows; labels are integer class ids"""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionMismatchError(f"logits {logits.shape} need one class id per row, got {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise InvalidParameterError(f"class ids must lie in 0..{logits.shape[1] - 1}")
    rows = np.arange(logits.shape[0])
    value = np.mean(logsumexp(logits, axis=1) - logits[rows, labels])
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1.0
    return float(value), grad / logits.shape[0]


# Training traces

@dataclass
class TrainingTrace:
    records: List[Tuple[int, int, str, float]] = field(default_factory=list)

    def append(self, step: int, seed: int, metric: str, value: float) -> None:
        self.records.append((step, seed, metric, float(value)))

    def extend(self, other: "TrainingTrace") -> None:
        self.records.extend(other.records)

    def series(self, seed: int, metric: str) -> np.ndarray:
        return np.array([v for _, s, m, v in self.records if s == seed and m == metric])

    def to_csv(self, sink: TextIO) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["step", "seed", "metric", "value"])
        for step, seed, metric, value in self.records:
            writer.writerow([step, seed, metric, repr(value) if math.isfinite(value) else "nan_flag"])


# Synthetic 4-node multi-label task

class SyntheticVariant(Enum):
    KP = "kp"
    SKP = "skp"
    SOFTMAX_SKP = "softmax_skp"


@dataclass
class LinearIterationModel:
    """
    X_k = sum_t A_t X_(k-1) W_t for k = 1..iterations, logits = X_l C + b.

    With softmax_aggregation the A_t are row softmaxes of free scores over the
    full support. Parameters are shared across iterations.
    """
    agg_params: List[np.ndarray]
    weights: List[np.ndarray]
    readout: np.ndarray
    bias: np.ndarray
    iterations: int
    softmax_aggregation: bool = False
    learn_aggregation: bool = True

    @classmethod
    def init(cls, variant: SyntheticVariant | str, n: int, d: int, c: int, iterations: int,
             rng: np.random.Generator, terms: int = 2, learn_aggregation: bool = True) -> "LinearIterationModel":
        variant = SyntheticVariant(variant)
        if iterations < 1:
            raise InvalidParameterError(f"iterations must be >= 1, got {iterations}")
        count = 1 if variant is SyntheticVariant.KP else terms
        if variant is SyntheticVariant.SOFTMAX_SKP:
            aggs = [rng.standard_normal((n, n)) for _ in range(count)]
        else:
            aggs = [rng.dirichlet(np.ones(n), size=n) for _ in range(count)]
        weights = []
        for _ in range(count):
            q, _ = np.linalg.qr(rng.standard_normal((d, d)))
            weights.append(q / count)
        return cls(agg_params=aggs, weights=weights, readout=rng.standard_normal((d, c)) / np.sqrt(d),
                   bias=np.zeros(c), iterations=iterations,
                   softmax_aggregation=variant is SyntheticVariant.SOFTMAX_SKP,
                   learn_aggregation=learn_aggregation)

    def aggregations(self) -> List[np.ndarray]:
        if self.softmax_aggregation:
            return [softmax(s, axis=1) for s in self.agg_params]
        return list(self.agg_params)

    def parameters(self) -> List[np.ndarray]:
        head = list(self.agg_params) if self.learn_aggregation else []
        return head + list(self.weights) + [self.readout, self.bias]

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        params = list(params)
        if self.learn_aggregation:
            count = len(self.agg_params)
            self.agg_params, params = params[:count], params[count:]
        count = len(self.weights)
        self.weights = params[:count]
        self.readout, self.bias = params[count], params[count + 1]

    def forward(self, x0: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        aggs = self.aggregations()
        states = [np.asarray(x0, dtype=float)]
        for _ in range(self.iterations):
            x = states[-1]
            states.append(sum(a @ x @ w for a, w in zip(aggs, self.weights)))
        return states[-1] @ self.readout + self.bias, states

    def backward(self, states: List[np.ndarray], d_logits: np.ndarray) -> List[np.ndarray]:
        """Gradients in the order of parameters()"""
        aggs = self.aggregations()
        d_readout = states[-1].T @ d_logits
        d_bias = d_logits.sum(axis=0)
        d_aggs = [np.zeros_like(a) for a in aggs]
        d_weights = [np.zeros_like(w) for w in self.weights]
        d_x = d_logits @ self.readout.T
        for k in range(self.iterations, 0, -1):
            prev = states[k - 1]
            d_prev = np.zeros_like(prev)
            for t, (a, w) in enumerate(zip(aggs, self.weights)):
                d_aggs[t] += d_x @ (prev @ w).T
                d_weights[t] += (a @ prev).T @ d_x
                d_prev += a.T @ d_x @ w.T
            d_x = d_prev
        if self.softmax_aggregation:
            d_aggs = [a * (da - np.sum(da * a, axis=1, keepdims=True)) for a, da in zip(aggs, d_aggs)]
        head = d_aggs if self.learn_aggregation else []
        return head + d_weights + [d_readout, d_bias]


def exact_match_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose thresholded predictions match every label"""
    return float(np.mean(np.all((logits > 0) == (labels > 0.5), axis=1)))


@dataclass
class SyntheticResult:
    variant: str
    iterations: int
    accuracy: Dict[int, float]
    final_loss: Dict[int, float]
    diverged: List[int]
    trace: TrainingTrace

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(list(self.accuracy.values())))


def train_synthetic(variant: SyntheticVariant | str, l: int, seeds: Sequence[int], steps: int,
                    lr: float = ADAM_LR, learn_aggregation: bool = False, terms: int = 2,
                    log_every: int = SYNTHETIC_LOG_EVERY) -> SyntheticResult:
    variant = SyntheticVariant(variant)
    if l < 1:
        raise InvalidParameterError(f"number of iterations must be >= 1, got {l}")
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    trace = TrainingTrace()
    accuracy, final_loss, diverged = {}, {}, []
    n, c = SYNTHETIC_LABELS.shape
    for seed in seeds:
        rng = named_rng(seed, f"synthetic/{variant.value}")
        x0 = rng.standard_normal((n, SYNTHETIC_FEATURES))
        model = LinearIterationModel.init(variant, n, SYNTHETIC_FEATURES, c, l, rng, terms=terms,
                                          learn_aggregation=learn_aggregation)
        state = AdamState.for_params(model.parameters(), lr=lr)
        loss = math.nan
        for step_no in range(1, steps + 1):
            logits, states = model.forward(x0)
            loss, d_logits = bce_sigmoid(logits, SYNTHETIC_LABELS)
            if not math.isfinite(loss) or not np.all(np.isfinite(d_logits)):
                logger.warning(f"{variant.value} seed {seed}: loss diverged at step {step_no}")
                diverged.append(seed)
                trace.append(step_no, seed, "loss", math.nan)
                break
            if step_no == 1 or step_no % log_every == 0:
                trace.append(step_no, seed, "loss", loss)
                trace.append(step_no, seed, "accuracy", exact_match_accuracy(logits, SYNTHETIC_LABELS))
            model.set_parameters(adam_step(model.parameters(), model.backward(states, d_logits), state))
        logits, _ = model.forward(x0)
        accuracy[seed] = exact_match_accuracy(logits, SYNTHETIC_LABELS) if np.all(np.isfinite(logits)) else 0.0
        final_loss[seed] = loss
        logger.info(f"{variant.value} l={l} seed {seed}: accuracy {accuracy[seed]:.2f}, loss {loss:.4e}")
    return SyntheticResult(variant=variant.value, iterations=l, accuracy=accuracy, final_loss=final_loss,
                           diverged=diverged, trace=trace)


# Fit-a-target task

class FitVariant(Enum):
    LMGC = "lmgc"        # K terms with learnable edge weights on the support
    KP = "kp"            # a single learnable term
    MIMO = "mimo"        # closed-form MIMO-GC, no training


@dataclass
class SingleStepModel:
    """Y = sum_k (S_k * mask) X W_k with free edge weights S_k on the support mask"""
    scores: List[np.ndarray]
    weights: List[np.ndarray]
    mask: np.ndarray

    @classmethod
    def init(cls, mask: np.ndarray, d: int, c: int, terms: int, rng: np.random.Generator) -> "SingleStepModel":
        n = mask.shape[0]
        scale = 1.0 / np.sqrt(np.maximum(mask.sum(axis=1, keepdims=True), 1.0))
        return cls(scores=[rng.standard_normal((n, n)) * scale * mask for _ in range(terms)],
                   weights=[rng.standard_normal((d, c)) / np.sqrt(d) for _ in range(terms)],
                   mask=mask.astype(float))

    def parameters(self) -> List[np.ndarray]:
        return list(self.scores) + list(self.weights)

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        count = len(self.scores)
        self.scores, self.weights = list(params[:count]), list(params[count:])

    def forward(self, x: np.ndarray) -> np.ndarray:
        return sum((s * self.mask) @ x @ w for s, w in zip(self.scores, self.weights))

    def backward(self, x: np.ndarray, d_out: np.ndarray) -> List[np.ndarray]:
        d_scores = [(d_out @ (x @ w).T) * self.mask for w in self.weights]
        d_weights = [((s * self.mask) @ x).T @ d_out for s in self.scores]
        return d_scores + d_weights


@dataclass
class FitTargetResult:
    variant: str
    best_mse: Dict[int, float]
    best_lr: Dict[int, float | None]
    diverged: List[Tuple[int, float]]
    trace: TrainingTrace


def _fit_instance(n: int, p: float, d: int, seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = erdos_renyi(n, p, seed)
    rng = named_rng(seed, "fit_target/data")
    x = rng.standard_normal((n, d))
    target = rng.standard_normal((n, d))
    mask = (g.adjacency() != 0) | np.eye(n, dtype=bool)
    return x, target, mask


def train_fit_target(n: int, p: float, d: int, seeds: Sequence[int], steps: int = FIT_TARGET_STEPS,
                     variant: FitVariant | str = FitVariant.LMGC, lrs: Sequence[float] = tuple(FIT_TARGET_LRS),
                     terms: int = 4) -> FitTargetResult:
    """
    Fit one message-passing step mapping random X to random X' on ER(n, p) with
    self-loops; the best final MSE over the learning rates is kept per seed.
    """
    variant = FitVariant(variant)
    if n < 1 or d < 1 or not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"invalid fit-target instance n={n}, p={p}, d={d}")
    trace = TrainingTrace()
    best_mse, best_lr, diverged = {}, {}, []
    for seed in seeds:
        x, target, mask = _fit_instance(n, p, d, seed)
        if variant is FitVariant.MIMO:
            a_sym = normalize(erdos_renyi(n, p, seed), NormKind.SYM, self_loops=True).matrix
            spec = eigendecompose_sym(a_sym)
            value, _ = mse(mimo_gc_apply(spec, mimo_gc_fit(spec, x, target), x), target)
            best_mse[seed], best_lr[seed] = value, None
            trace.append(0, seed, "mse", value)
            continue
        count = 1 if variant is FitVariant.KP else terms
        best_mse[seed], best_lr[seed] = math.inf, None
        for lr in lrs:
            model = SingleStepModel.init(mask, d, d, count, named_rng(seed, "fit_target/init"))
            state = AdamState.for_params(model.parameters(), lr=lr)
            value = math.nan
            for step_no in range(1, steps + 1):
                value, d_out = mse(model.forward(x), target)
                if not math.isfinite(value):
                    diverged.append((seed, lr))
                    logger.warning(f"fit-target seed {seed} lr {lr}: diverged at step {step_no}")
                    break
                if step_no == 1 or step_no % SYNTHETIC_LOG_EVERY == 0:
                    trace.append(step_no, seed, f"mse@lr={lr}", value)
                model.set_parameters(adam_step(model.parameters(), model.backward(x, d_out), state))
            else:
                value, _ = mse(model.forward(x), target)
                trace.append(steps, seed, f"mse@lr={lr}", value)
            if math.isfinite(value) and value < best_mse[seed]:
                best_mse[seed], best_lr[seed] = value, lr
        logger.info(f"fit-target {variant.value} seed {seed}: best MSE {best_mse[seed]:.3e} at lr {best_lr[seed]}")
    return FitTargetResult(variant=variant.value, best_mse=best_mse, best_lr=best_lr, diverged=diverged,
                           trace=trace)


# Gradient checks of the training paths

def numeric_gradient(loss_fn: Callable[[List[np.ndarray]], float], params: Sequence[np.ndarray],
                     step: float = FINITE_DIFF_STEP) -> List[np.ndarray]:
    params = [np.array(p, dtype=float) for p in params]
    grads = []
    for idx, p in enumerate(params):
        grad = np.zeros_like(p)
        for pos in np.ndindex(p.shape):
            original = p[pos]
            p[pos] = original + step
            plus = loss_fn(params)
            p[pos] = original - step
            minus = loss_fn(params)
            p[pos] = original
            grad[pos] = (plus - minus) / (2.0 * step)
        grads.append(grad)
    return grads


def check_training_gradients(seed: int = 0, instances: int = 5, iterations: int = 3) -> Dict[str, List[float]]:
    """Relative error of analytic vs central-difference gradients per training path"""
    errors: Dict[str, List[float]] = {}
    n, c = SYNTHETIC_LABELS.shape
    for variant in SyntheticVariant:
        errors[variant.value] = []
        for instance in range(instances):
            rng = named_rng(seed + instance, f"gradcheck/{variant.value}")
            x0 = rng.standard_normal((n, SYNTHETIC_FEATURES))
            model = LinearIterationModel.init(variant, n, SYNTHETIC_FEATURES, c, iterations, rng)
            logits, states = model.forward(x0)
            _, d_logits = bce_sigmoid(logits, SYNTHETIC_LABELS)
            analytic = model.backward(states, d_logits)

            def loss_fn(params: List[np.ndarray], model=model, x0=x0) -> float:
                probe = replace(model)
                probe.set_parameters(params)
                return bce_sigmoid(probe.forward(x0)[0], SYNTHETIC_LABELS)[0]

            numeric = numeric_gradient(loss_fn, model.parameters())
            errors[variant.value].append(relative_error(_flat(analytic), _flat(numeric)))
    errors[FitVariant.LMGC.value] = []
    for instance in range(instances):
        x, target, mask = _fit_instance(8, 0.3, 3, seed + instance)
        model = SingleStepModel.init(mask, 3, 3, 2, named_rng(seed + instance, "gradcheck/fit"))
        _, d_out = mse(model.forward(x), target)
        analytic = model.backward(x, d_out)

        def fit_loss(params: List[np.ndarray], model=model, x=x, target=target) -> float:
            probe = replace(model)
            probe.set_parameters(params)
            return mse(probe.forward(x), target)[0]

        numeric = numeric_gradient(fit_loss, model.parameters())
        errors[FitVariant.LMGC.value].append(relative_error(_flat(analytic), _flat(numeric)))
    for name, errs in errors.items():
        logger.debug(f"gradient check {name}: max relative error {max(errs):.2e}")
    return errors


def _flat(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays])
