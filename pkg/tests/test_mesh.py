import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phenotaxis.mesh import MIN_NODES, build_mesh, domain_measure, integrate

dims = st.sampled_from([1, 2, 3])
radii = st.floats(0.1, 100.0)
counts = st.integers(MIN_NODES, 400)


def test_nodes_follow_quadratic_grading():
    m = build_mesh(1, 10.0, 100)
    assert m.nodes[50] == pytest.approx(2.5, rel=1e-15)
    i = np.arange(101)
    np.testing.assert_allclose(m.nodes, 10.0 * i**2 / 100**2, rtol=1e-15, atol=0)


def test_endpoints_full_scale():
    m = build_mesh(2, 10.0, 10_000)
    assert m.nodes[0] == 0.0
    assert m.nodes[-1] == 10.0


def test_ball_volume():
    m = build_mesh(3, 10.0, 64)
    assert m.cell_volumes.sum() == pytest.approx(4188.790205, rel=1e-9)


def test_centres_are_midpoints():
    m = build_mesh(2, 3.0, 17)
    np.testing.assert_array_equal(m.cell_centers, 0.5 * (m.nodes[:-1] + m.nodes[1:]))


@pytest.mark.parametrize("dim,R,N", [(0, 1.0, 10), (4, 1.0, 10), (1, 0.0, 10), (1, -2.0, 10),
                                     (1, 1.0, 7), (2, 1.0, 10.5), (1, math.inf, 10)])
def test_rejects_bad_arguments(dim, R, N):
    with pytest.raises(ValueError):
        build_mesh(dim, R, N)


def test_arrays_are_read_only():
    m = build_mesh(1, 1.0, 10)
    with pytest.raises(ValueError):
        m.cell_volumes[0] = 1.0


@given(dims, radii, counts)
def test_mesh_invariants(dim, R, N):
    m = build_mesh(dim, R, N)
    assert m.nodes[0] == 0.0 and m.nodes[-1] == R
    assert np.all(np.diff(m.nodes) > 0)
    assert np.all(m.cell_volumes > 0)
    assert m.cell_volumes.sum() == pytest.approx(domain_measure(dim, R), rel=1e-12)
    if dim >= 2:
        assert m.face_areas[0] == 0.0
        assert np.all(np.diff(m.face_areas) >= 0)


@given(dims, radii, counts, st.floats(-5, 5))
def test_constant_quadrature_exact(dim, R, N, c):
    m = build_mesh(dim, R, N)
    assert integrate(m, np.full(N, c)) == pytest.approx(c * domain_measure(dim, R), rel=1e-12, abs=1e-300)


def test_integrate_examples():
    m = build_mesh(2, 10.0, 50)
    assert integrate(m, np.full(50, 3.0)) == pytest.approx(300 * math.pi, rel=1e-12)
    assert integrate(m, np.zeros(50)) == 0.0


def test_integrate_linear_field_against_fine_quadrature():
    m = build_mesh(1, 10.0, 2000)
    x = (np.arange(10**6) + 0.5) * 1e-5
    reference = float(np.sum(x) * 1e-5)
    assert integrate(m, m.cell_centers) == pytest.approx(reference, rel=1e-6)


def test_integrate_length_mismatch():
    with pytest.raises(ValueError):
        integrate(build_mesh(1, 1.0, 10), np.ones(9))


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_refinement_converges(dim):
    exact = {1: None, 2: None, 3: None}
    f = lambda r: np.cos(r)
    errs = []
    fine = build_mesh(dim, 2.0, 40_000)
    ref = integrate(fine, f(fine.cell_centers))
    for N in (50, 100, 200):
        m = build_mesh(dim, 2.0, N)
        errs.append(abs(integrate(m, f(m.cell_centers)) - ref))
    assert errs[1] < errs[0] and errs[2] < errs[1]
    assert math.log2(errs[1] / errs[2]) >= 0.9
