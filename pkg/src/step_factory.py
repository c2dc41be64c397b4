from typing import List, Sequence

import numpy as np

from .base_step import (BaseStep, FixedAggregationStep, RandomSkpStep, ResidualStep, RowStochasticStep,
                        StepKind)
from .config import ROW_STOCHASTIC_MIN_ENTRY
from .graph_core import normalize
from .logger import get_logger
from .models import Activation, Graph, NormKind
from .mrs_split import assign_relations, degree_ordering, split_aggregation
from .seeding import named_rng

logger = get_logger("step_factory")


class StepFactory:
    """Factory class for creating the iterated steps of a decay run"""

    @staticmethod
    def create_step(kind: StepKind | str, g: Graph, d: int, rng: np.random.Generator, skp_terms: int = 2,
                    min_entry: float = ROW_STOCHASTIC_MIN_ENTRY) -> BaseStep:
        kind = StepKind(kind)
        support = (g.adjacency() != 0) | np.eye(g.n, dtype=bool)

        if kind is StepKind.GCN:
            a_sym = normalize(g, NormKind.SYM, self_loops=True).matrix
            return FixedAggregationStep(kind, [a_sym], d, rng)
        if kind is StepKind.RES_GCN:
            a_sym = normalize(g, NormKind.SYM, self_loops=True).matrix
            return ResidualStep(kind, [a_sym], d, rng)
        if kind is StepKind.SAGE:
            a_rw = normalize(g, NormKind.RW).matrix
            return FixedAggregationStep(kind, [np.eye(g.n), a_rw], d, rng)
        if kind is StepKind.ROW_STOCHASTIC:
            return RowStochasticStep(support, d, rng, min_entry)
        if kind is StepKind.SKP:
            return RandomSkpStep(support, skp_terms, d, rng)

        # MRS: degree split of A_sym with self-loops, one weight per relation
        agg = normalize(g, NormKind.SYM, self_loops=True)
        relations = assign_relations(g, degree_ordering(g), self_loops=True)
        return FixedAggregationStep(kind, split_aggregation(agg, relations), d, rng, Activation.RELU)

    @staticmethod
    def create_steps(g: Graph, kinds: Sequence[StepKind | str], d: int, seed: int,
                     skp_terms: int = 2) -> List[BaseStep]:
        """One step per kind, each on its own named random substream"""
        steps = []
        for kind in kinds:
            kind = StepKind(kind)
            steps.append(StepFactory.create_step(kind, g, d, named_rng(seed, f"decay/{kind.value}"), skp_terms))
        logger.debug(f"created steps {[s.name for s in steps]} for seed {seed}")
        return steps
