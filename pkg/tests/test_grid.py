import math

import numpy as np
import pytest

from curveflow import corpus
from curveflow.errors import GridMismatch, RankMismatch, SingularMetric
from curveflow.grid import (
    ChartGrid,
    MetricField,
    TensorField,
    integrate,
    l2_norm_sq,
    partial_derivative,
    pointwise_inner,
)
from curveflow.homogeneous import berger
from curveflow.snapshot import decode, encode, read_array, write_field

TWO_PI = 2.0 * math.pi


@pytest.mark.parametrize("order", [2, 4])
def test_stencil_converges_at_its_order(order):
    errs = []
    for n in (16, 32):
        grid = ChartGrid.cube(2, n, TWO_PI, order)
        x, y = grid.coords()
        f = np.sin(x) * np.cos(2 * y)
        errs.append(np.max(np.abs(grid.diff(f, 0) - np.cos(x) * np.cos(2 * y))))
    assert errs[0] / errs[1] == pytest.approx(2.0**order, rel=0.1)


def test_stencil_exact_on_constants():
    grid = ChartGrid.cube(3, 8, 1.0)
    assert np.all(grid.diff(np.full(grid.shape, 3.0), 2) == 0.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        ChartGrid((4, 8), (1.0, 1.0))
    with pytest.raises(ValueError):
        ChartGrid((8, 8), (1.0, -1.0))
    with pytest.raises(ValueError):
        ChartGrid((8, 8), (1.0, 1.0), fd_order=6)
    with pytest.raises(ValueError):
        ChartGrid((8,), (1.0,))


def test_refine_doubles_extents():
    g = ChartGrid((8, 10, 12), (1.0, 2.0, 3.0)).refine()
    assert g.extents == (16, 20, 24) and g.lengths == (1.0, 2.0, 3.0)


def test_integrate_flat_volume():
    grid = ChartGrid((8, 12), (2.0, 3.0))
    g = MetricField.flat(grid, 4.0)
    one = TensorField(grid, np.ones(grid.shape), "")
    # sqrt(det(4 I)) = 4 in 2D
    assert integrate(one, g) == pytest.approx(24.0, rel=1e-14)


def test_pointwise_inner_uses_inverse_metric():
    grid = ChartGrid.cube(2, 8, 1.0)
    g = MetricField.flat(grid, 2.0)
    h = TensorField(grid, np.broadcast_to(np.eye(2), grid.shape + (2, 2)).copy(), "dd")
    # |I|^2_g = tr(g^-1 I g^-1 I) = 2 / 4
    assert np.allclose(pointwise_inner(h, h, g).data, 0.5)
    assert l2_norm_sq(h, g) == pytest.approx(0.5 * 2.0, rel=1e-14)


def test_partial_derivative_prepends_slot(conformal2):
    d = partial_derivative(conformal2, 0)
    assert d.index == "dd"
    assert d.data.shape == conformal2.data.shape


def test_metric_rejects_indefinite():
    grid = ChartGrid.cube(2, 8, 1.0)
    d = np.broadcast_to(np.diag([1.0, -1.0]), grid.shape + (2, 2)).copy()
    with pytest.raises(SingularMetric) as info:
        MetricField(grid, d)
    assert info.value.eigenvalue == -1.0


def test_metric_rejects_asymmetric_and_wrong_rank():
    grid = ChartGrid.cube(2, 8, 1.0)
    d = np.broadcast_to(np.array([[1.0, 0.1], [0.0, 1.0]]), grid.shape + (2, 2)).copy()
    with pytest.raises(SingularMetric):
        MetricField(grid, d)
    with pytest.raises(RankMismatch):
        MetricField(grid, np.eye(2), "ud")


def test_mixing_grids_raises():
    a = MetricField.flat(ChartGrid.cube(2, 8, 1.0))
    b = MetricField.flat(ChartGrid.cube(2, 16, 1.0))
    with pytest.raises(GridMismatch):
        a + b


def test_inverse_and_raise_lower_roundtrip(perturbed3):
    g = perturbed3
    h = corpus.smooth_symmetric(g.grid, 5)
    assert np.allclose(np.einsum("...ij,...jk->...ik", g.data, g.inverse.data), np.eye(3), atol=1e-13)
    back = g.lower_slot(g.raise_slot(h, 0), 0)
    assert np.max(np.abs(back.data - h.data)) < 1e-13


def test_snapshot_roundtrip(tmp_path, perturbed3):
    T = corpus.smooth_symmetric(perturbed3.grid, 1)
    T = TensorField(T.grid, np.einsum("...ij,...k->...ijk", T.data, np.ones(3)), "dud")
    write_field(tmp_path / "t.cfld", T)
    data, dim, p, q, extents = read_array(tmp_path / "t.cfld")
    assert (dim, p, q, extents) == (3, 1, 2, (12, 12, 12))
    # contravariant slot moved to the front
    assert np.array_equal(data, np.moveaxis(T.data, 4, 3))


def test_snapshot_header_is_32_bytes():
    buf = encode(np.zeros((8, 8, 2, 2)), 2, 0, 2, (8, 8))
    assert len(buf) == 32 + 8 * 256
    assert buf[:4] == b"CFLD"
    assert buf[28:32] == b"\0\0\0\0"


def test_snapshot_frame_extents(tmp_path):
    g = berger(1.0, 1.2, 0.9).to_metric()
    write_field(tmp_path / "f.cfld", g)
    data, dim, p, q, extents = read_array(tmp_path / "f.cfld")
    assert extents == (1, 1, 1)
    assert np.array_equal(data.reshape(3, 3), np.diag([1.0, 1.2, 0.9]))


def test_snapshot_rejects_bad_input():
    with pytest.raises(RankMismatch):
        encode(np.zeros((8, 8, 2)), 2, 0, 2, (8, 8))
    buf = encode(np.zeros((8, 8, 2, 2)), 2, 0, 2, (8, 8))
    with pytest.raises(ValueError):
        decode(b"XXXX" + buf[4:])
    with pytest.raises(ValueError):
        decode(buf[:-8])
