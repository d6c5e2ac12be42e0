"""Uniform-grid scalar/vector/tensor fields over a box in R^n.

A grid covers the closed box [-L, L]^n with an isotropic node spacing
h = 2L/(nodes - 1).  Fields store one float64 per node and component,
structure-of-arrays (component axis first), row-major over nodes with
axis 0 slowest.  Symmetric 2-tensors keep the n(n+1)/2 lower-triangular
components in the fixed order (0,0), (1,0), (1,1), (2,0), (2,1), (2,2), ...

All operations here are pure: inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.ndimage import convolve1d


def sym_pairs(n: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i >= j, in storage order."""
    return [(i, j) for i in range(n) for j in range(i + 1)]


def sym_index(i: int, j: int) -> int:
    """Storage slot of component (i, j) of a symmetric tensor."""
    if j > i:
        i, j = j, i
    return i * (i + 1) // 2 + j


def sym_component_count(n: int) -> int:
    return n * (n + 1) // 2


def sym_weights(n: int) -> np.ndarray:
    """Frobenius multiplicities: 1 for diagonal slots, 2 off-diagonal."""
    return np.array([1.0 if i == j else 2.0 for i, j in sym_pairs(n)])


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a uniform node-centered grid on [-L, L]^n."""

    dimension: int
    nodes: tuple[int, ...]
    half_widths: tuple[float, ...]

    def __post_init__(self):
        n = self.dimension
        if n not in (3, 4):
            raise ValueError(f"dimension must be 3 or 4, got {n}")
        object.__setattr__(self, "nodes", tuple(int(m) for m in self.nodes))
        object.__setattr__(self, "half_widths", tuple(float(L) for L in self.half_widths))
        if len(self.nodes) != n or len(self.half_widths) != n:
            raise ValueError("nodes and half_widths must have one entry per axis")
        if any(m < 8 for m in self.nodes):
            raise ValueError("need at least 8 nodes per axis")
        if any(L <= 0 for L in self.half_widths):
            raise ValueError("half widths must be positive")
        spacings = [2.0 * L / (m - 1) for m, L in zip(self.nodes, self.half_widths)]
        h = spacings[0]
        if any(abs(s - h) > 1e-12 * h for s in spacings):
            raise ValueError(f"grid must be isotropic, got spacings {spacings}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_widths[0] / (self.nodes[0] - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def node_count(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dimension

    def axis_coordinates(self, axis: int) -> np.ndarray:
        L, m = self.half_widths[axis], self.nodes[axis]
        return np.linspace(-L, L, m)

    def coordinate_arrays(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for ax in range(self.dimension):
            shape = [1] * self.dimension
            shape[ax] = self.nodes[ax]
            out.append(self.axis_coordinates(ax).reshape(shape))
        return out

    def radius_squared(self, center: Sequence[float]) -> np.ndarray:
        coords = self.coordinate_arrays()
        r2 = np.zeros(self.shape)
        for ax, c in enumerate(coords):
            r2 = r2 + (c - center[ax]) ** 2
        return r2

    def contains_point(self, point: Sequence[float]) -> bool:
        return all(-L <= p <= L for p, L in zip(point, self.half_widths))


def cube(dimension: int, nodes_per_axis: int, half_width: float) -> GridSpec:
    """Convenience constructor for a cubic grid."""
    return GridSpec(dimension, (nodes_per_axis,) * dimension, (half_width,) * dimension)


def _check_values(grid: GridSpec, values: np.ndarray, ncomp: int | None) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    expected = grid.shape if ncomp is None else (ncomp,) + grid.shape
    if values.shape != expected:
        raise ValueError(f"values shape {values.shape} != expected {expected}")
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    return values


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, None)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        """Evaluate fn(*coordinate_arrays) on the nodes."""
        coords = grid.coordinate_arrays()
        return cls(grid, np.broadcast_to(fn(*coords), grid.shape).astype(np.float64).copy())


@dataclass
class VectorField:
    grid: GridSpec
    values: np.ndarray  # (n, *shape)

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, self.grid.dimension)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, np.zeros((grid.dimension,) + grid.shape))


@dataclass
class SymTensorField:
    grid: GridSpec
    values: np.ndarray  # (n(n+1)/2, *shape)

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, sym_component_count(self.grid.dimension))

    def component(self, i: int, j: int) -> np.ndarray:
        return self.values[sym_index(i, j)]

    def copy(self) -> "SymTensorField":
        return SymTensorField(self.grid, self.values.copy())

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SymTensorField":
        return cls(grid, np.zeros((sym_component_count(grid.dimension),) + grid.shape))

    @classmethod
    def euclidean_components(cls, grid: GridSpec) -> "SymTensorField":
        vals = np.zeros((sym_component_count(grid.dimension),) + grid.shape)
        for i in range(grid.dimension):
            vals[sym_index(i, i)] = 1.0
        return cls(grid, vals)


Field = Union[ScalarField, VectorField, SymTensorField]


@dataclass(frozen=True)
class Region:
    """Euclidean ball intersected with the grid nodes."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radius <= 0:
            raise ValueError("region radius must be positive")

    def validate(self, grid: GridSpec) -> None:
        if len(self.center) != grid.dimension:
            raise ValueError("region center has wrong dimension")
        for c, L in zip(self.center, grid.half_widths):
            if abs(c) + self.radius >= L:
                raise ValueError(
                    f"region ball (center {self.center}, radius {self.radius}) "
                    f"must lie strictly inside the box of half width {L}"
                )

    def mask(self, grid: GridSpec) -> np.ndarray:
        self.validate(grid)
        return grid.radius_squared(self.center) <= self.radius**2


# ---------------------------------------------------------------------------
# finite differences


def _diff1(arr: np.ndarray, axis: int, h: float, scheme: str,
           out: np.ndarray | None = None) -> np.ndarray:
    """First derivative by central differences; boundary slots left at 0.

    `out` must not alias `arr`.
    """
    if out is None:
        out = np.empty_like(arr)
    src = np.moveaxis(arr, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    if scheme == "central2":
        np.subtract(src[2:], src[:-2], out=dst[1:-1])
        dst[1:-1] *= 0.5 / h
    elif scheme == "central4":
        np.subtract(src[3:-1], src[1:-3], out=dst[2:-2])
        dst[2:-2] *= 8.0
        dst[2:-2] -= src[4:]
        dst[2:-2] += src[:-4]
        dst[2:-2] /= 12.0 * h
        dst[1] = (src[2] - src[0]) / (2.0 * h)
        dst[-2] = (src[-1] - src[-3]) / (2.0 * h)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    dst[0] = 0.0
    dst[-1] = 0.0
    return out


def _diff2(arr: np.ndarray, axis: int, h: float, scheme: str,
           out: np.ndarray | None = None) -> np.ndarray:
    """Second derivative by the compact central stencil; boundary slots 0."""
    if out is None:
        out = np.empty_like(arr)
    src = np.moveaxis(arr, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    if scheme == "central2":
        dst[1:-1] = (src[2:] - 2.0 * src[1:-1] + src[:-2]) / (h * h)
    elif scheme == "central4":
        dst[2:-2] = (
            -(src[4:] + src[:-4]) + 16.0 * (src[3:-1] + src[1:-3]) - 30.0 * src[2:-2]
        ) / (12.0 * h * h)
        dst[1] = (src[2] - 2.0 * src[1] + src[0]) / (h * h)
        dst[-2] = (src[-1] - 2.0 * src[-2] + src[-3]) / (h * h)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    dst[0] = 0.0
    dst[-1] = 0.0
    return out


def partial_derivative(f: ScalarField, axis: int, order: int = 1,
                       scheme: str = "central2") -> ScalarField:
    """Central-difference derivative along one axis.

    Interior nodes get the second-order stencil (fourth-order behind
    scheme="central4"); the boundary ring is filled with zeros and is the
    caller's responsibility.
    """
    if not 0 <= axis < f.grid.dimension:
        raise ValueError(f"axis {axis} out of range for dimension {f.grid.dimension}")
    if order == 1:
        vals = _diff1(f.values, axis, f.grid.spacing, scheme)
    elif order == 2:
        vals = _diff2(f.values, axis, f.grid.spacing, scheme)
    else:
        raise ValueError("order must be 1 or 2")
    return ScalarField(f.grid, vals)


def laplacian(f: ScalarField, scheme: str = "central2") -> ScalarField:
    """Sum of compact second-difference stencils over all axes."""
    h = f.grid.spacing
    vals = _diff2(f.values, 0, h, scheme)
    for ax in range(1, f.grid.dimension):
        vals += _diff2(f.values, ax, h, scheme)
    return ScalarField(f.grid, vals)


# ---------------------------------------------------------------------------
# interpolation


def _interp_components(grid: GridSpec, comps: np.ndarray, point: Sequence[float]) -> np.ndarray:
    """Multilinear interpolation of (ncomp, *shape) data at one point."""
    n = grid.dimension
    h = grid.spacing
    idx = np.empty(n, dtype=np.int64)
    frac = np.empty(n)
    for ax in range(n):
        L = grid.half_widths[ax]
        p = point[ax]
        if not (-L <= p <= L):
            raise ValueError(f"point {tuple(point)} outside grid box")
        x = (p + L) / h
        i = int(np.floor(x))
        i = min(max(i, 0), grid.nodes[ax] - 2)
        idx[ax] = i
        frac[ax] = x - i
    out = np.zeros(comps.shape[0])
    for corner in range(2**n):
        w = 1.0
        sel = []
        for ax in range(n):
            bit = (corner >> ax) & 1
            w *= frac[ax] if bit else (1.0 - frac[ax])
            sel.append(idx[ax] + bit)
        if w != 0.0:
            out += w * comps[(slice(None),) + tuple(sel)]
    return out


def interpolate(f: Field, point: Sequence[float]):
    """Multilinear interpolation from the 2^n surrounding nodes.

    Returns a float for scalar fields and a component vector otherwise.
    """
    if isinstance(f, ScalarField):
        return float(_interp_components(f.grid, f.values[None], point)[0])
    return _interp_components(f.grid, f.values, point)


# ---------------------------------------------------------------------------
# pointwise tensor norms and region norms


def _metric_matrices(grid: GridSpec, comps: np.ndarray, where: np.ndarray) -> np.ndarray:
    """(m, n, n) matrices gathered at the nodes selected by a boolean mask."""
    n = grid.dimension
    sel = comps[:, where]
    mats = np.empty((sel.shape[1], n, n))
    for (i, j) in sym_pairs(n):
        mats[:, i, j] = sel[sym_index(i, j)]
        mats[:, j, i] = sel[sym_index(i, j)]
    return mats


def pointwise_norm(f: Field, reference=None, where: np.ndarray | None = None) -> np.ndarray:
    """Pointwise norm field; tensor indices are raised with the reference
    metric (Euclidean when reference is None).

    With a boolean mask `where`, only those nodes are evaluated and a flat
    array is returned.
    """
    grid = f.grid
    if where is None:
        where = np.ones(grid.shape, dtype=bool)
    if isinstance(f, ScalarField):
        return np.abs(f.values[where])
    if reference is None:
        if isinstance(f, VectorField):
            return np.sqrt(np.sum(f.values[:, where] ** 2, axis=0))
        w = sym_weights(grid.dimension)
        return np.sqrt(np.tensordot(w, f.values[:, where] ** 2, axes=(0, 0)))
    ginv, g = reference.inverse_matrices(where), reference.matrices(where)
    if isinstance(f, VectorField):
        v = f.values[:, where].T  # (m, n) contravariant
        return np.sqrt(np.einsum("mi,mij,mj->m", v, g, v))
    t = _metric_matrices(grid, f.values, where)  # (m, n, n) covariant
    raised = np.einsum("mik,mjl,mkl->mij", ginv, ginv, t)
    return np.sqrt(np.einsum("mij,mij->m", raised, t))


def norm(f: Field, region: Region | None, flavor: str = "linf", p: float = 2.0,
         reference=None) -> float:
    """L-infinity or L^p norm of a field over a region.

    flavor "linf": max over region nodes of the pointwise norm.
    flavor "lp":   (sum |.|^p h^n sqrt(det reference))^(1/p), midpoint
    quadrature.  `region=None` means every grid node.  `reference` is a
    curvature.MetricField used both for the pointwise norm and the volume
    element; the default is the Euclidean metric.
    """
    grid = f.grid
    mask = np.ones(grid.shape, dtype=bool) if region is None else region.mask(grid)
    if not mask.any():
        raise ValueError("empty region")
    vals = pointwise_norm(f, reference=reference, where=mask)
    if flavor == "linf":
        return float(np.max(vals))
    if flavor == "lp":
        if p < 1:
            raise ValueError("p must be >= 1")
        vol = grid.cell_volume
        if reference is None:
            weights = vol
        else:
            weights = vol * np.sqrt(reference.determinant(mask))
        return float(np.sum(vals**p * weights) ** (1.0 / p))
    raise ValueError(f"unknown norm flavor {flavor!r}")


# ---------------------------------------------------------------------------
# heat kernel convolution


def _gauss_kernel(h: float, t: float) -> np.ndarray:
    m = int(np.ceil(6.0 * np.sqrt(t) / h))
    x = np.arange(-m, m + 1) * h
    k = np.exp(-(x**2) / (4.0 * t))
    return k / k.sum()  # unit mass: preserves constants, keeps sup non-increasing


def heat_convolve(f: Field, t: float, exterior: Union[float, str, Sequence[float]] = 0.0) -> Field:
    """Componentwise convolution with the Euclidean heat kernel at time t.

    The Gaussian (4 pi t)^{-n/2} exp(-|x-y|^2/4t) is applied as a separable
    product of per-axis kernels truncated at radius 6 sqrt(t) and normalized
    to unit mass.  `exterior` extends the input beyond the box: a constant
    per component, or "edge" for nearest-node extension.
    """
    grid = f.grid
    if t <= 0:
        raise ValueError("t must be positive")
    h = grid.spacing
    if any(6.0 * np.sqrt(t) > L for L in grid.half_widths):
        raise ValueError("kernel support 6*sqrt(t) exceeds the box half-width")
    kern = _gauss_kernel(h, t)
    comps = f.values if f.values.ndim > grid.dimension else f.values[None]
    ncomp = comps.shape[0]
    if isinstance(exterior, str):
        if exterior != "edge":
            raise ValueError("exterior must be a constant, a component sequence, or 'edge'")
        modes = [("nearest", 0.0)] * ncomp
    elif np.isscalar(exterior):
        modes = [("constant", float(exterior))] * ncomp
    else:
        ext = list(exterior)
        if len(ext) != ncomp:
            raise ValueError("one exterior value per component required")
        modes = [("constant", float(c)) for c in ext]
    out = np.empty_like(comps)
    for c in range(ncomp):
        acc = comps[c]
        mode, cval = modes[c]
        for ax in range(grid.dimension):
            acc = convolve1d(acc, kern, axis=ax, mode=mode, cval=cval)
        out[c] = acc
    if isinstance(f, ScalarField):
        return ScalarField(grid, out[0])
    if isinstance(f, VectorField):
        return VectorField(grid, out)
    return SymTensorField(grid, out)


def coarsen_spec(grid: GridSpec, stride: int) -> GridSpec:
    """Grid obtained by keeping every stride-th node (same box)."""
    if any((m - 1) % stride for m in grid.nodes):
        raise ValueError("stride must divide nodes-1 on every axis")
    return GridSpec(grid.dimension,
                    tuple((m - 1) // stride + 1 for m in grid.nodes),
                    grid.half_widths)


def coarsen_components(grid: GridSpec, comps: np.ndarray, stride: int) -> np.ndarray:
    sl = (slice(None),) + (slice(None, None, stride),) * grid.dimension
    return comps[sl].copy()
