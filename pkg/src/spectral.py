"""
Symmetric eigendecomposition, graph Fourier transform and spectral filters

The Fourier basis is taken from A_sym (descending eigenvalues), so the first
component is the smooth one: D^1/2 1 for a connected graph.
"""
import csv
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, TextIO

import numpy as np

from .config import ORTHONORMAL_TOL, RECONSTRUCTION_TOL, SYMMETRY_TOL
from .errors import ConvergenceError, DimensionMismatchError, InvalidParameterError
from .graph_core import normalize
from .logger import get_logger
from .models import Graph, NormKind, Spectrum

logger = get_logger("spectral")

FILTER_DUMP_HEADER = ["filter_id", "eigen_index", "eigenvalue", "coefficient", "abs_coefficient"]


def eigendecompose_sym(m: np.ndarray, metadata: Dict[str, object] | None = None) -> Spectrum:
    """
    Orthonormal eigendecomposition of a symmetric matrix.

    Eigenvalues are sorted descending; each eigenvector is signed so that its
    first entry with magnitude above 1e-10 is positive, which makes dumps
    reproducible.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > SYMMETRY_TOL:
        raise InvalidParameterError(f"matrix is not symmetric (max |M - M^T| = {asym:.3e})")

    try:
        values, vectors = np.linalg.eigh(m)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f"symmetric eigensolver did not converge: {e}") from e

    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    for k in range(vectors.shape[1]):
        significant = np.flatnonzero(np.abs(vectors[:, k]) > 1e-10)
        if significant.size and vectors[significant[0], k] < 0:
            vectors[:, k] = -vectors[:, k]

    n = m.shape[0]
    ortho = float(np.max(np.abs(vectors.T @ vectors - np.eye(n))))
    recon = float(np.max(np.abs((vectors * values) @ vectors.T - m)))
    logger.debug(f"eigendecomposition n={n}: orthonormality {ortho:.2e}, reconstruction {recon:.2e}")
    if ortho > ORTHONORMAL_TOL or recon > RECONSTRUCTION_TOL * max(1.0, float(np.max(np.abs(m)))):
        raise ConvergenceError(f"eigendecomposition failed its checks (orthonormality {ortho:.2e}, "
                               f"reconstruction {recon:.2e})")
    return Spectrum(basis=vectors, eigenvalues=values, metadata=dict(metadata or {}))


def graph_spectrum(g: Graph, self_loops: bool = False) -> Spectrum:
    agg = normalize(g, NormKind.SYM, self_loops=self_loops)
    return eigendecompose_sym(agg.matrix, metadata={"matrix": "A_sym", "self_loops": self_loops})


def fourier(spec: Spectrum, x: np.ndarray) -> np.ndarray:
    """B = U^T x"""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != spec.n:
        raise DimensionMismatchError(f"signal has {x.shape[0]} rows, spectrum has {spec.n} nodes")
    return spec.basis.T @ x


def inverse_fourier(spec: Spectrum, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[0] != spec.n:
        raise DimensionMismatchError(f"coefficients have {b.shape[0]} rows, spectrum has {spec.n} nodes")
    return spec.basis @ b


class FilterKind(Enum):
    ARBITRARY = "arbitrary"
    GCN = "gcn"
    CHEBYSHEV = "chebyshev"
    ITERATED_GCN = "iterated_gcn"


@dataclass(frozen=True, eq=False)
class FilterSpec:
    """Spectral filter; build with the classmethods"""
    kind: FilterKind
    params: np.ndarray

    def __post_init__(self):
        if self.params.ndim != 1 or self.params.size == 0:
            raise InvalidParameterError(f"{self.kind.value} filter needs a nonempty parameter vector")
        if not np.all(np.isfinite(self.params)):
            raise InvalidParameterError(f"{self.kind.value} filter has non-finite parameters")

    @classmethod
    def arbitrary(cls, theta) -> "FilterSpec":
        return cls(FilterKind.ARBITRARY, np.asarray(theta, dtype=float).ravel())

    @classmethod
    def gcn(cls, w: float) -> "FilterSpec":
        return cls(FilterKind.GCN, np.array([float(w)]))

    @classmethod
    def chebyshev(cls, w) -> "FilterSpec":
        return cls(FilterKind.CHEBYSHEV, np.asarray(w, dtype=float).ravel())

    @classmethod
    def iterated_gcn(cls, ws) -> "FilterSpec":
        return cls(FilterKind.ITERATED_GCN, np.asarray(ws, dtype=float).ravel())

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "FilterSpec":
        """{"kind": "gcn", "w": 2} / {"kind": "chebyshev", "w": [0, 1]} / ... as used by run configs"""
        kind = FilterKind(data.get("kind"))
        key = {"arbitrary": "theta", "gcn": "w", "chebyshev": "w", "iterated_gcn": "ws"}[kind.value]
        if key not in data:
            raise InvalidParameterError(f"{kind.value} filter needs key {key!r}")
        return getattr(cls, kind.value)(data[key])


def filter_coefficients(spec: Spectrum, f: FilterSpec) -> np.ndarray:
    lam = spec.eigenvalues
    if f.kind is FilterKind.ARBITRARY:
        if f.params.size != spec.n:
            raise DimensionMismatchError(f"theta has length {f.params.size}, spectrum has {spec.n} nodes")
        return spec.basis.T @ f.params
    if f.kind is FilterKind.GCN:
        return f.params[0] * lam
    if f.kind is FilterKind.CHEBYSHEV:
        t_prev, t_cur = np.ones_like(lam), lam
        out = f.params[0] * t_prev
        if f.params.size > 1:
            out = out + f.params[1] * t_cur
        for w in f.params[2:]:
            t_prev, t_cur = t_cur, 2.0 * lam * t_cur - t_prev
            out = out + w * t_cur
        return out
    return float(np.prod(f.params)) * lam ** f.params.size


def random_filter(n: int, rng: np.random.Generator) -> FilterSpec:
    return FilterSpec.arbitrary(rng.standard_normal(n))


def dump_filters(spec: Spectrum, specs: Iterable[FilterSpec], sink: TextIO) -> int:
    """Write coefficient rows for every filter; eigen_index is 1-based. Returns the row count."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(FILTER_DUMP_HEADER)
    rows = 0
    for filter_id, f in enumerate(specs):
        coeffs = filter_coefficients(spec, f)
        for k, (lam, c) in enumerate(zip(spec.eigenvalues, coeffs), start=1):
            writer.writerow([filter_id, k, repr(float(lam)), repr(float(c)), repr(float(abs(c)))])
            rows += 1
    return rows
