import math

import numpy as np
import pytest

from curveflow import corpus
from curveflow.grid import ChartGrid, MetricField, TensorField
from curveflow.homogeneous import berger
from curveflow.tensor_calc import (
    bach,
    christoffel,
    commutator_defect,
    covariant_derivative,
    curvature,
    first_bianchi_defect,
    kulkarni_nomizu,
    laplacian,
    linearized_riemann,
    metric_compatibility_defect,
    riemann,
    riemann_general,
    riemann_symmetry_defect,
    weyl,
)

TWO_PI = 2.0 * math.pi


def test_round_sphere_values():
    cb = curvature(berger().to_metric())
    I = np.eye(3)
    assert np.allclose(cb.Rc.data, 2.0 * I, atol=1e-14)
    assert float(cb.S.data) == pytest.approx(6.0, abs=1e-13)
    assert np.allclose(cb.E.data, -1.0 * I, atol=1e-14)
    # sectional curvature R_ijji = +1 on the unit sphere
    assert cb.Rm.data[0, 1, 1, 0] == pytest.approx(1.0, abs=1e-14)
    # Rm = (1/2) g (.) g
    g = berger().to_metric()
    assert np.allclose(cb.Rm.data, 0.5 * kulkarni_nomizu(g, g).data, atol=1e-14)


def test_frame_general_and_fast_riemann_agree():
    g = berger(1.0, 1.4, 0.7).to_metric()
    assert np.max(np.abs(riemann(g).data - riemann_general(g).data)) < 1e-13


def test_flat_is_flat():
    g = MetricField.flat(ChartGrid.cube(3, 8, 1.0), 2.5)
    assert np.max(np.abs(riemann(g).data)) == 0.0
    assert np.max(np.abs(christoffel(g).gamma.data)) == 0.0


def test_conformal_2d_scalar_curvature_converges():
    # g = e^{2 phi} delta  =>  S = -2 e^{-2 phi} Lap(phi)
    errs = []
    for n in (16, 32):
        grid = ChartGrid.cube(2, n, TWO_PI)
        g = corpus.conformal(grid, 0.1)
        phi = corpus.conformal_factor(grid, 0.1)
        x, y = grid.coords()
        lap = np.zeros(grid.shape)
        for j, (m0, m1) in enumerate(corpus.default_modes(2)):
            lap -= 0.1 * (m0**2 + m1**2) * np.cos(m0 * x + m1 * y + 0.7 * j)
        exact = -2.0 * np.exp(-2.0 * phi) * lap
        errs.append(np.max(np.abs(curvature(g).S.data - exact)))
    assert errs[1] < 5e-4
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.2)


def test_riemann_symmetries_exact(perturbed3):
    Rm = riemann(perturbed3)
    assert riemann_symmetry_defect(Rm) < 1e-12
    assert first_bianchi_defect(Rm) < 1e-12


def test_metric_compatibility_roundoff(perturbed3):
    assert metric_compatibility_defect(perturbed3) < 1e-12


def test_covariant_derivative_of_metric_exact(conformal2):
    assert np.max(np.abs(covariant_derivative(conformal2, conformal2).data)) < 1e-12


def test_laplacian_of_function_on_flat():
    grid = ChartGrid.cube(2, 32, TWO_PI)
    g = MetricField.flat(grid)
    x, y = grid.coords()
    f = TensorField(grid, np.sin(x) * np.cos(y), "")
    # fourth-order stencil applied twice: error 1.97e-4 at N = 32
    assert np.max(np.abs(laplacian(f, g).data + 2.0 * f.data)) < 2.5e-4


def test_commutator_on_flat_vanishes():
    grid = ChartGrid.cube(3, 8, TWO_PI)
    W = corpus.smooth_vector(grid, 1)
    assert commutator_defect(W, MetricField.flat(grid)) < 1e-12


def test_linearized_riemann_converges_to_difference_quotient():
    errs = []
    for n in (12, 24):
        g = corpus.perturbed(ChartGrid.cube(3, n, TWO_PI), 0.1, seed=0)
        h = corpus.smooth_symmetric(g.grid, 3)
        s = 1e-4
        fd = (riemann(MetricField(g.grid, g.data + s * h.data)).data
              - riemann(MetricField(g.grid, g.data - s * h.data)).data) / (2 * s)
        errs.append(np.max(np.abs(linearized_riemann(g, h).data - fd)))
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.2)


def test_linearization_on_frames_exact():
    F = berger(1.0, 1.2, 0.9)
    g = F.to_metric()
    h = TensorField(g.grid, np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.05], [0.0, 0.05, 0.4]]), "dd")
    s = 1e-5
    fd = (riemann(MetricField(g.grid, g.data + s * h.data)).data
          - riemann(MetricField(g.grid, g.data - s * h.data)).data) / (2 * s)
    assert np.max(np.abs(linearized_riemann(g, h).data - fd)) < 1e-8


def test_weyl_vanishes_in_3d(perturbed3):
    assert np.max(np.abs(weyl(perturbed3).data)) < 1e-12


@pytest.mark.slow
def test_bach_of_conformally_flat_4d_converges_to_zero():
    # conformally flat => Bach = 0; varies in x, y only
    vals = []
    for n in (12, 24):
        grid = ChartGrid((n, n, 8, 8), (TWO_PI,) * 4)
        x, y, _, _ = grid.coords()
        phi = 0.1 * (np.cos(x) + np.sin(y) + np.cos(x + y))
        g = MetricField(grid, np.exp(2 * phi)[..., None, None] * np.eye(4))
        vals.append(np.max(np.abs(bach(g).data)))
    assert vals[1] < vals[0] / 8.0
