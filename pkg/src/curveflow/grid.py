"""Periodic chart grids, frame "grids", tensor fields and metric-weighted quadrature.

Tensor components are stored node-major: ``data.shape == grid.shape + (dim,) * rank``.
Each index slot is tagged ``'u'`` (contravariant) or ``'d'`` (covariant) in
``TensorField.index``; derivative slots produced by covariant differentiation are
prepended, so ``(nabla T)[..., a, i, j] = nabla_a T_ij``.

Reductions (``integrate``, ``l2_inner``) use ``numpy.sum`` over the C-ordered node
array, i.e. numpy's pairwise summation tree, so results do not depend on any
thread schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch, RankMismatch, SingularMetric

__all__ = [
    "ChartGrid",
    "FrameGrid",
    "TensorField",
    "MetricField",
    "partial_derivative",
    "integrate",
    "pointwise_inner",
    "l2_inner",
    "l2_norm_sq",
    "change_slot",
]


@dataclass(frozen=True)
class ChartGrid:
    """Uniform periodic box ``prod_i [0, L_i)`` with ``N_i`` nodes per axis."""

    extents: tuple[int, ...]
    lengths: tuple[float, ...]
    fd_order: int = 4

    def __post_init__(self):
        extents = tuple(int(n) for n in self.extents)
        lengths = tuple(float(x) for x in self.lengths)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "lengths", lengths)
        if len(extents) not in (2, 3, 4):
            raise ValueError(f"dimension must be 2, 3 or 4, got {len(extents)}")
        if len(lengths) != len(extents):
            raise ValueError("extents and lengths differ in length")
        if any(n < 8 for n in extents):
            raise ValueError(f"every axis needs at least 8 nodes, got {extents}")
        if not all(math.isfinite(x) and x > 0 for x in lengths):
            raise ValueError(f"periods must be positive, got {lengths}")
        if self.fd_order not in (2, 4):
            raise ValueError(f"fd_order must be 2 or 4, got {self.fd_order}")

    @classmethod
    def cube(cls, dim: int, n: int, length: float = 1.0, fd_order: int = 4) -> "ChartGrid":
        return cls((n,) * dim, (length,) * dim, fd_order)

    is_frame = False
    structure_constants = None

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.extents

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.extents))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def coords(self) -> list[np.ndarray]:
        axes = [np.arange(n) * h for n, h in zip(self.extents, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def refine(self, factor: int = 2) -> "ChartGrid":
        return ChartGrid(tuple(n * factor for n in self.extents), self.lengths, self.fd_order)

    def with_order(self, fd_order: int) -> "ChartGrid":
        return ChartGrid(self.extents, self.lengths, fd_order)

    def diff(self, arr: np.ndarray, axis: int, order: int | None = None) -> np.ndarray:
        order = self.fd_order if order is None else order
        h = self.spacing[axis]
        if order == 2:
            return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2.0 * h)
        if order == 4:
            return (
                8.0 * (np.roll(arr, -1, axis) - np.roll(arr, 1, axis))
                - (np.roll(arr, -2, axis) - np.roll(arr, 2, axis))
            ) / (12.0 * h)
        raise ValueError(f"unsupported stencil order {order}")


@dataclass(frozen=True)
class FrameGrid:
    """Single-"node" geometry of left-invariant tensors on a 3D unimodular group.

    Components are taken in a fixed left-invariant frame with brackets
    ``[e2,e3] = c1 e1, [e3,e1] = c2 e2, [e1,e2] = c3 e3``.  Left-invariant
    components are constant, so frame derivatives vanish and all geometry comes
    from the structure constants.  ``volume_norm`` is the volume of the compact
    quotient measured by ``e^1 ^ e^2 ^ e^3``; for SU(2) with ``c = (2, 2, 2)`` the
    frame is orthonormal for the unit round S^3, whose volume is ``2 pi^2``.
    """

    structure: tuple[float, float, float] = (2.0, 2.0, 2.0)
    volume_norm: float = 2.0 * math.pi**2
    fd_order: int = 0

    is_frame = True

    def __post_init__(self):
        object.__setattr__(self, "structure", tuple(float(c) for c in self.structure))
        if len(self.structure) != 3:
            raise ValueError("frame geometries are three-dimensional")

    @property
    def dim(self) -> int:
        return 3

    @property
    def shape(self) -> tuple[int, ...]:
        return ()

    @property
    def extents(self) -> tuple[int, ...]:
        return ()

    @property
    def cell_volume(self) -> float:
        return self.volume_norm

    @cached_property
    def structure_constants(self) -> np.ndarray:
        """``C[e, a, b] = C^e_ab`` with ``[e_a, e_b] = C^e_ab e_e``."""
        C = np.zeros((3, 3, 3))
        for i, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
            C[i, a, b] = self.structure[i]
            C[i, b, a] = -self.structure[i]
        return C

    def diff(self, arr: np.ndarray, axis: int, order: int | None = None) -> np.ndarray:
        return np.zeros_like(arr)


Grid = ChartGrid | FrameGrid


def _check_index(index: str) -> str:
    if any(c not in "ud" for c in index):
        raise ValueError(f"index string may only contain 'u'/'d', got {index!r}")
    return index


@dataclass(frozen=True, eq=False)
class TensorField:
    grid: Grid
    data: np.ndarray
    index: str = ""

    def __post_init__(self):
        _check_index(self.index)
        data = np.asarray(self.data, dtype=np.float64)
        expected = tuple(self.grid.shape) + (self.grid.dim,) * len(self.index)
        if data.shape != expected:
            raise RankMismatch(f"component array has shape {data.shape}, expected {expected}")
        object.__setattr__(self, "data", data)

    @property
    def rank(self) -> tuple[int, int]:
        return self.index.count("u"), self.index.count("d")

    @property
    def order(self) -> int:
        return len(self.index)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @classmethod
    def zeros(cls, grid: Grid, index: str = "") -> "TensorField":
        return cls(grid, np.zeros(tuple(grid.shape) + (grid.dim,) * len(index)), index)

    @classmethod
    def constant(cls, grid: Grid, values, index: str) -> "TensorField":
        values = np.asarray(values, dtype=float)
        return cls(grid, np.broadcast_to(values, tuple(grid.shape) + values.shape).copy(), index)

    def _like(self, data, index=None) -> "TensorField":
        return TensorField(self.grid, data, self.index if index is None else index)

    def _compatible(self, other: "TensorField"):
        if other.grid != self.grid:
            raise GridMismatch("tensor fields live on different grids")
        if other.index != self.index:
            raise RankMismatch(f"index types differ: {self.index!r} vs {other.index!r}")

    def __add__(self, other):
        self._compatible(other)
        return self._like(self.data + other.data)

    def __sub__(self, other):
        self._compatible(other)
        return self._like(self.data - other.data)

    def __neg__(self):
        return self._like(-self.data)

    def __mul__(self, c):
        if isinstance(c, TensorField):
            if c.order != 0:
                raise RankMismatch("only scalar fields may multiply tensors")
            if c.grid != self.grid:
                raise GridMismatch("tensor fields live on different grids")
            return self._like(self.data * c.data.reshape(c.data.shape + (1,) * self.order))
        return self._like(self.data * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def transpose(self, *perm: int) -> "TensorField":
        """Permute index slots; ``perm`` lists old slot numbers in their new order."""
        nn = len(self.grid.shape)
        axes = list(range(nn)) + [nn + p for p in perm]
        return self._like(np.transpose(self.data, axes), "".join(self.index[p] for p in perm))

    def symmetry_defect(self, i: int, j: int, anti: bool = False) -> float:
        perm = list(range(self.order))
        perm[i], perm[j] = perm[j], perm[i]
        sw = self.transpose(*perm).data
        return float(np.max(np.abs(self.data + sw if anti else self.data - sw)))

    def symmetrized(self) -> "TensorField":
        """Symmetric part of a two-slot tensor."""
        if self.order != 2:
            raise RankMismatch("symmetrized() expects a two-slot tensor")
        return self._like(0.5 * (self.data + np.swapaxes(self.data, -1, -2)))


def change_slot(data: np.ndarray, matrix: np.ndarray, slot: int, nidx: int) -> np.ndarray:
    """Contract index ``slot`` (of ``nidx`` index slots) with a node-wise square matrix."""
    ax = data.ndim - nidx + slot
    moved = np.moveaxis(data, ax, -1)
    node_shape = matrix.shape[:-2]
    n = matrix.shape[-1]
    mid = moved.shape[len(node_shape):-1]
    flat = moved.reshape(node_shape + (-1, n))
    out = (flat @ matrix).reshape(node_shape + mid + (n,))
    return np.moveaxis(out, -1, ax)


class MetricField(TensorField):
    """Symmetric positive-definite covariant 2-tensor with cached inverse and volume density."""

    def __init__(self, grid: Grid, data, index: str = "dd", *, check: bool = True):
        if index != "dd":
            raise RankMismatch("a metric is a covariant 2-tensor")
        super().__init__(grid, data, "dd")
        d = self.data
        if check:
            asym = np.max(np.abs(d - np.swapaxes(d, -1, -2))) if d.size else 0.0
            scale = max(np.max(np.abs(d)), 1.0)
            if asym > 1e-12 * scale:
                raise SingularMetric(f"metric is not symmetric (defect {asym:.3e})")
            eig = np.linalg.eigvalsh(d)
            lam = eig[..., 0]
            if not np.all(np.isfinite(eig)) or np.min(lam) <= 0.0:
                node = np.unravel_index(int(np.argmin(lam)), lam.shape) if lam.ndim else ()
                raise SingularMetric(
                    f"metric not positive-definite at node {node} (eigenvalue {float(np.min(lam)):.3e})",
                    node=node,
                    eigenvalue=float(np.min(lam)),
                )

    @classmethod
    def flat(cls, grid: Grid, scale: float = 1.0) -> "MetricField":
        return cls(grid, np.broadcast_to(scale * np.eye(grid.dim), tuple(grid.shape) + (grid.dim,) * 2).copy())

    @classmethod
    def from_tensor(cls, T: TensorField) -> "MetricField":
        if T.index != "dd":
            raise RankMismatch("a metric is a covariant 2-tensor")
        return cls(T.grid, T.data)

    @cached_property
    def inverse(self) -> TensorField:
        return TensorField(self.grid, np.linalg.inv(self.data), "uu")

    @cached_property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.data)

    @cached_property
    def vol(self) -> TensorField:
        return TensorField(self.grid, np.sqrt(self.det), "")

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.data)[..., 0]))

    def raise_slot(self, T: TensorField, slot: int) -> TensorField:
        if T.index[slot] != "d":
            raise RankMismatch(f"slot {slot} of {T.index!r} is not covariant")
        data = change_slot(T.data, self.inverse.data, slot, T.order)
        return TensorField(T.grid, data, T.index[:slot] + "u" + T.index[slot + 1:])

    def lower_slot(self, T: TensorField, slot: int) -> TensorField:
        if T.index[slot] != "u":
            raise RankMismatch(f"slot {slot} of {T.index!r} is not contravariant")
        data = change_slot(T.data, self.data, slot, T.order)
        return TensorField(T.grid, data, T.index[:slot] + "d" + T.index[slot + 1:])

    def all_lowered(self, T: TensorField) -> TensorField:
        for s, c in enumerate(T.index):
            if c == "u":
                T = self.lower_slot(T, s)
        return T

    def all_raised(self, T: TensorField) -> TensorField:
        for s, c in enumerate(T.index):
            if c == "d":
                T = self.raise_slot(T, s)
        return T

    def trace(self, T: TensorField, i: int = 0, j: int = 1) -> TensorField:
        """Metric trace over slots ``i < j`` (either variance)."""
        if not i < j:
            raise ValueError("trace slots must satisfy i < j")
        if T.index[i] == T.index[j]:
            T = self.raise_slot(T, j) if T.index[j] == "d" else self.lower_slot(T, j)
        nn = len(T.grid.shape)
        data = np.trace(T.data, axis1=nn + i, axis2=nn + j)
        return TensorField(T.grid, data, T.index[:i] + T.index[i + 1:j] + T.index[j + 1:])


def _check_pair(U: TensorField, V: TensorField):
    if U.grid != V.grid:
        raise GridMismatch("tensor fields live on different grids")
    if U.index != V.index:
        raise RankMismatch(f"rank mismatch: {U.index!r} vs {V.index!r}")


def partial_derivative(F: TensorField, axis: int, order: int | None = None) -> TensorField:
    """Componentwise periodic central difference along node axis ``axis``."""
    if not 0 <= axis < F.grid.dim:
        raise IndexError(f"axis {axis} out of range for dimension {F.grid.dim}")
    return F._like(F.grid.diff(F.data, axis, order))


def pointwise_inner(U: TensorField, V: TensorField, g: MetricField) -> TensorField:
    """Full metric contraction ``<U, V>_g`` at every node."""
    _check_pair(U, V)
    if g.grid != U.grid:
        raise GridMismatch("metric and fields live on different grids")
    W = U
    for s, c in enumerate(U.index):
        W = g.raise_slot(W, s) if c == "d" else g.lower_slot(W, s)
    nn = len(U.grid.shape)
    axes = tuple(range(nn, nn + U.order))
    return TensorField(U.grid, np.sum(W.data * V.data, axis=axes), "")


def integrate(f: TensorField, g: MetricField) -> float:
    """Node-sum quadrature of ``f dmu_g`` (spectrally accurate on periodic data)."""
    if f.order != 0:
        raise RankMismatch("integrate expects a scalar field")
    if f.grid != g.grid:
        raise GridMismatch("integrand and metric live on different grids")
    return float(np.sum(f.data * g.vol.data) * f.grid.cell_volume)


def l2_inner(U: TensorField, V: TensorField, g: MetricField) -> float:
    return integrate(pointwise_inner(U, V, g), g)


def l2_norm_sq(U: TensorField, g: MetricField) -> float:
    return l2_inner(U, U, g)
