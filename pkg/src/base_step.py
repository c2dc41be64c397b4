from enum import Enum
from typing import List

import numpy as np

from .logger import get_logger
from .models import Activation, OperatorBundle
from .mp_ops import random_skp_bundle, res_gcn_step, row_stochastic_bundle, skp_bundle, step


class StepKind(Enum):
    """Message-passing updates available for iterated traces"""
    GCN = "gcn"
    RES_GCN = "res_gcn"
    SAGE = "sage"
    ROW_STOCHASTIC = "row_stochastic"
    SKP = "skp"
    MRS = "mrs"


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


class BaseStep:
    """Base class for time-inhomogeneous steps: parameters are redrawn at every call"""

    def __init__(self, kind: StepKind, d: int, rng: np.random.Generator):
        self.kind = kind
        self.d = d
        self.rng = rng
        self.calls = 0
        self.logger = get_logger(f"step.{kind.value}")

    @property
    def name(self) -> str:
        return self.kind.value

    def draw(self) -> OperatorBundle:
        """Bundle used for the next iteration"""
        raise NotImplementedError

    def apply(self, bundle: OperatorBundle, x: np.ndarray) -> np.ndarray:
        return step(bundle, x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        bundle = self.draw()
        self.calls += 1
        if self.calls == 1:
            self.logger.debug(f"{self.name}: {len(bundle.terms)} term(s), activation {bundle.activation.value}")
        return self.apply(bundle, x)


class FixedAggregationStep(BaseStep):
    """sum_t A_t X W_t with fixed aggregations and fresh N(0, 1/d) weights"""

    def __init__(self, kind: StepKind, aggs: List[np.ndarray], d: int, rng: np.random.Generator,
                 activation: Activation = Activation.RELU):
        super().__init__(kind, d, rng)
        self.aggs = [np.asarray(a, dtype=float) for a in aggs]
        self.activation = activation

    def draw(self) -> OperatorBundle:
        weights = [self.rng.standard_normal((self.d, self.d)) / np.sqrt(self.d) for _ in self.aggs]
        return skp_bundle(self.aggs, weights, self.activation)


class ResidualStep(FixedAggregationStep):
    def apply(self, bundle: OperatorBundle, x: np.ndarray) -> np.ndarray:
        return res_gcn_step(bundle, x)


class RowStochasticStep(BaseStep):
    """Attention-like step: a fresh positive row-stochastic matrix on the support and an orthogonal W"""

    def __init__(self, support: np.ndarray, d: int, rng: np.random.Generator, min_entry: float):
        super().__init__(StepKind.ROW_STOCHASTIC, d, rng)
        self.support = np.asarray(support, dtype=bool)
        self.min_entry = min_entry

    def draw(self) -> OperatorBundle:
        return row_stochastic_bundle(self.support, random_orthogonal(self.d, self.rng), self.rng, self.min_entry)


class RandomSkpStep(BaseStep):
    """r fresh Gaussian aggregations on the support per iteration"""

    def __init__(self, support: np.ndarray, r: int, d: int, rng: np.random.Generator):
        super().__init__(StepKind.SKP, d, rng)
        self.support = np.asarray(support, dtype=bool)
        self.r = r

    def draw(self) -> OperatorBundle:
        return random_skp_bundle(self.support, self.r, self.d, self.rng)
