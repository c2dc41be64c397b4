"""
Tests for eigendecomposition, the graph Fourier transform and filter dumps
"""
import csv
import io

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from src.errors import DimensionMismatchError, InvalidParameterError
from src.graph_core import complete, karate_club, normalize
from src.models import NormKind
from src.spectral import (FILTER_DUMP_HEADER, FilterSpec, dump_filters, eigendecompose_sym, filter_coefficients,
                          fourier, graph_spectrum, inverse_fourier, random_filter)

K3_SPEC = graph_spectrum(complete(3))


def test_identity_spectrum():
    spec = eigendecompose_sym(np.eye(3))
    assert_allclose(spec.eigenvalues, [1, 1, 1])
    assert_allclose(spec.basis.T @ spec.basis, np.eye(3), atol=1e-12)


def test_triangle_spectrum():
    assert_allclose(K3_SPEC.eigenvalues, [1, -0.5, -0.5], atol=1e-12)
    assert_allclose(K3_SPEC.basis[:, 0], np.ones(3) / np.sqrt(3), atol=1e-12)
    assert K3_SPEC.metadata == {"matrix": "A_sym", "self_loops": False}


def test_diagonal_spectrum_sorted_descending():
    spec = eigendecompose_sym(np.diag([-2.0, 3.0]))
    assert_allclose(spec.eigenvalues, [3, -2])
    assert_allclose(np.abs(spec.basis), [[0, 1], [1, 0]])


def test_sign_convention_first_entry_positive():
    spec = graph_spectrum(karate_club())
    for k in range(spec.n):
        column = spec.basis[:, k]
        first = column[np.flatnonzero(np.abs(column) > 1e-10)[0]]
        assert first > 0


def test_rejects_asymmetric_and_non_square():
    with pytest.raises(InvalidParameterError):
        eigendecompose_sym(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionMismatchError):
        eigendecompose_sym(np.ones((2, 3)))


def test_fourier_of_basis_vector_and_zero():
    assert_allclose(fourier(K3_SPEC, K3_SPEC.basis[:, 0]), [1, 0, 0], atol=1e-12)
    assert_allclose(fourier(K3_SPEC, np.zeros(3)), np.zeros(3))
    b = fourier(K3_SPEC, np.array([1.0, 0.0, 0.0]))
    assert np.linalg.norm(b) == pytest.approx(1.0, abs=1e-12)


def test_fourier_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        fourier(K3_SPEC, np.ones(4))
    with pytest.raises(DimensionMismatchError):
        inverse_fourier(K3_SPEC, np.ones((2, 2)))


@seed(11)
@settings(max_examples=50, deadline=None)
@given(x=arrays(np.float64, (34, 3), elements=st.floats(-1e3, 1e3)))
def test_parseval_and_inverse(x):
    spec = graph_spectrum(karate_club())
    b = fourier(spec, x)
    assert np.linalg.norm(b) == pytest.approx(np.linalg.norm(x), rel=1e-10, abs=1e-10)
    assert_allclose(inverse_fourier(spec, b), x, atol=1e-9)


def test_gcn_filter_coefficients():
    assert_allclose(filter_coefficients(K3_SPEC, FilterSpec.gcn(2)), [2, -1, -1], atol=1e-12)
    coeffs = filter_coefficients(graph_spectrum(karate_club()), FilterSpec.gcn(-0.3))
    assert int(np.argmax(np.abs(coeffs))) == 0


@pytest.mark.parametrize("w1,w2", [(1.0, 5.0), (-2.0, 0.1), (3.0, -7.5)])
def test_gcn_filters_are_parallel(w1, w2):
    spec = graph_spectrum(karate_club())
    a = filter_coefficients(spec, FilterSpec.gcn(w1))
    b = filter_coefficients(spec, FilterSpec.gcn(w2))
    cosine = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    assert abs(cosine) == pytest.approx(1.0, abs=1e-12)


def test_chebyshev_first_order_is_identity_on_eigenvalues():
    spec = graph_spectrum(karate_club())
    assert_allclose(filter_coefficients(spec, FilterSpec.chebyshev([0, 1])), spec.eigenvalues, atol=0)


def test_chebyshev_second_order():
    lam = K3_SPEC.eigenvalues
    expected = 0.5 + 2 * lam + 3 * (2 * lam ** 2 - 1)
    assert_allclose(filter_coefficients(K3_SPEC, FilterSpec.chebyshev([0.5, 2, 3])), expected, atol=1e-12)


def test_iterated_gcn_dominance():
    coeffs = filter_coefficients(K3_SPEC, FilterSpec.iterated_gcn([1, 1, 1, 1]))
    assert_allclose(np.abs(coeffs), [1, 0.0625, 0.0625], atol=1e-12)
    spec = graph_spectrum(karate_club())
    coeffs = filter_coefficients(spec, FilterSpec.iterated_gcn([0.7, 1.3, 2.0]))
    assert_allclose(np.abs(coeffs / coeffs[0]), np.abs(spec.eigenvalues / spec.eigenvalues[0]) ** 3, atol=1e-12)


def test_arbitrary_filter_length_checked():
    with pytest.raises(DimensionMismatchError):
        filter_coefficients(K3_SPEC, FilterSpec.arbitrary([1, 2]))


def test_filter_spec_from_dict():
    assert FilterSpec.from_dict({"kind": "gcn", "w": 2}).params.tolist() == [2.0]
    with pytest.raises(InvalidParameterError):
        FilterSpec.from_dict({"kind": "chebyshev"})
    with pytest.raises(InvalidParameterError):
        FilterSpec.gcn(float("nan"))


def test_dump_single_gcn_filter():
    sink = io.StringIO()
    assert dump_filters(K3_SPEC, [FilterSpec.gcn(1)], sink) == 3
    rows = list(csv.reader(io.StringIO(sink.getvalue())))
    assert rows[0] == FILTER_DUMP_HEADER
    assert [int(r[1]) for r in rows[1:]] == [1, 2, 3]
    assert_allclose([float(r[4]) for r in rows[1:]], [1, 0.5, 0.5], atol=1e-12)


def test_dump_empty_list_is_header_only():
    sink = io.StringIO()
    assert dump_filters(K3_SPEC, [], sink) == 0
    assert sink.getvalue().strip() == ",".join(FILTER_DUMP_HEADER)


def test_dump_multiple_filters_distinguished():
    rng = np.random.default_rng(0)
    spec = graph_spectrum(karate_club())
    sink = io.StringIO()
    dump_filters(spec, [random_filter(spec.n, rng) for _ in range(3)], sink)
    ids = [int(r["filter_id"]) for r in csv.DictReader(io.StringIO(sink.getvalue()))]
    assert sorted(set(ids)) == [0, 1, 2]
    assert len(ids) == 3 * 34


def test_spectrum_with_self_loops_differs():
    plain = normalize(complete(3), NormKind.SYM).matrix
    loops = graph_spectrum(complete(3), self_loops=True)
    assert loops.metadata["self_loops"] is True
    assert not np.allclose(loops.eigenvalues, np.linalg.eigvalsh(plain)[::-1])
