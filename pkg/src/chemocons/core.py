"""Structured cell-centred grids, discrete fields, norms and face stencils.

Every other module works on :class:`Field` objects living on a
:class:`Grid`.  Values are stored as an ``ndarray`` of shape
``grid.shape`` (axis 0 is x).  Boundary behaviour of a field is carried by
its ``bc`` attribute; gradient operators refuse to run without one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np


class NonFiniteFieldError(ValueError):
    """Raised when a field holds NaN or Inf."""


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on an interval or a rectangle.

    Parameters
    ----------
    extent : tuple of float
        Physical side length per axis.
    n_cells : tuple of int
        Number of cells per axis.
    """

    extent: tuple
    n_cells: tuple

    def __post_init__(self):
        extent = tuple(float(e) for e in self.extent)
        n_cells = tuple(int(n) for n in self.n_cells)
        if len(extent) not in (1, 2) or len(extent) != len(n_cells):
            raise ValueError("grid must be 1-D or 2-D with one extent per axis")
        if any(e <= 0 or not math.isfinite(e) for e in extent):
            raise ValueError("extents must be positive and finite")
        if any(n < 1 for n in n_cells):
            raise ValueError("n_cells must be positive")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "n_cells", n_cells)

    @classmethod
    def interval(cls, n: int, length: float = 1.0) -> "Grid":
        return cls((length,), (n,))

    @classmethod
    def rectangle(cls, nx: int, ny: Optional[int] = None, lx: float = 1.0,
                  ly: Optional[float] = None) -> "Grid":
        return cls((lx, lx if ly is None else ly), (nx, nx if ny is None else ny))

    @property
    def dim(self) -> int:
        return len(self.n_cells)

    @property
    def shape(self) -> tuple:
        return self.n_cells

    @property
    def size(self) -> int:
        return int(np.prod(self.n_cells))

    @property
    def h(self) -> tuple:
        return tuple(e / n for e, n in zip(self.extent, self.n_cells))

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extent))

    @property
    def oracle_mode(self) -> bool:
        """1-D grids are test vehicles only."""
        return self.dim == 1

    def centers(self) -> tuple:
        """Cell-centre coordinates, one array of ``shape`` per axis."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.n_cells, self.h)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def face_weights(self, axis: int) -> np.ndarray:
        """Dual volume attached to each face normal to ``axis``.

        Interior faces carry ``h_axis`` times the transverse cell widths,
        boundary faces half of that.  Shape broadcasts against
        :func:`grad_face` output.
        """
        n = self.n_cells[axis]
        w = np.full(n + 1, self.h[axis])
        w[0] = w[-1] = 0.5 * self.h[axis]
        transverse = self.cell_volume / self.h[axis]
        shape = [1] * self.dim
        shape[axis] = n + 1
        return (w * transverse).reshape(shape)


@dataclass(frozen=True)
class Dirichlet:
    """Fixed boundary value, enforced at the boundary face (half a cell away).

    ``value`` is a constant or a callable of the coordinates, evaluated at
    the centres of the boundary faces.
    """

    value: Union[float, Callable]

    def face_values(self, grid: "Grid", axis: int):
        """Boundary data on the low and high faces normal to ``axis``."""
        if not callable(self.value):
            return self.value, self.value
        out = []
        for pos in (0.0, grid.extent[axis]):
            coords = [np.take(c, [0], axis=axis) for c in grid.centers()]
            coords[axis] = np.full_like(coords[axis], pos)
            out.append(np.broadcast_to(self.value(*coords), coords[axis].shape).astype(float))
        return out[0], out[1]


@dataclass(frozen=True)
class NoFlux:
    """Zero total flux ``grad f - f grad(drift) = 0`` on the boundary.

    With ``drift=None`` this is a homogeneous Neumann condition.
    """

    drift: Optional["Field"] = None


BoundaryRule = Union[Dirichlet, NoFlux]


@dataclass(frozen=True, eq=False)
class Field:
    """One real value per cell of ``grid``, plus an optional boundary rule."""

    grid: Grid
    values: np.ndarray
    bc: Optional[BoundaryRule] = field(default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != self.grid.shape:
            if vals.size != self.grid.size:
                raise ValueError(
                    f"field has {vals.size} values, grid has {self.grid.size} cells")
            vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteFieldError("field contains NaN or Inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, value: float, bc=None) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)), bc)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable, bc=None) -> "Field":
        """Sample ``func`` at cell centres."""
        vals = np.broadcast_to(func(*grid.centers()), grid.shape)
        return cls(grid, vals, bc)

    def with_values(self, values, bc=...) -> "Field":
        return Field(self.grid, values, self.bc if bc is ... else bc)

    def with_bc(self, bc) -> "Field":
        return Field(self.grid, self.values, bc)

    def __len__(self):
        return self.grid.size


def _require_finite(f: Field):
    if not np.all(np.isfinite(f.values)):
        raise NonFiniteFieldError("field contains NaN or Inf")


def integrate(f: Field) -> float:
    """Midpoint-rule integral over the domain (exactly rounded sum)."""
    _require_finite(f)
    return _scale(math.fsum(f.values.ravel()), f.grid)


def _scale(total: float, grid: Grid) -> float:
    # total * measure / size is exact for constant data where total * h^d is not
    return total * grid.measure / grid.size


def lp_norm(f: Field, p: float = 2) -> float:
    """Discrete L^p norm; ``p=np.inf`` gives the maximum modulus."""
    if p == np.inf or p == "inf":
        _require_finite(f)
        return float(np.max(np.abs(f.values)))
    p = float(p)
    if not p >= 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    _require_finite(f)
    a = np.abs(f.values.ravel())
    if p == 1:
        return _scale(math.fsum(a), f.grid)
    if p == 2:
        s = math.fsum(a * a)
    else:
        s = math.fsum(a ** p)
    return _scale(s, f.grid) ** (1.0 / p)


def _boundary_gradients(f: Field, axis: int):
    """Outward-ordered gradients on the low and high boundary faces."""
    h = f.grid.h[axis]
    lo = np.take(f.values, [0], axis=axis)
    hi = np.take(f.values, [-1], axis=axis)
    bc = f.bc
    if isinstance(bc, Dirichlet):
        g_lo, g_hi = bc.face_values(f.grid, axis)
        return (lo - g_lo) / (0.5 * h), (g_hi - hi) / (0.5 * h)
    if isinstance(bc, NoFlux):
        if bc.drift is None:
            return np.zeros_like(lo), np.zeros_like(hi)
        dlo, dhi = _boundary_gradients(bc.drift, axis)
        return lo * dlo, hi * dhi
    raise ValueError("no boundary rule registered on field")


def grad_face(f: Field) -> tuple:
    """Face-normal gradient components, one array per axis.

    The array for axis ``a`` has ``n_a + 1`` entries along ``a``: index 0 and
    ``n_a`` are boundary faces, the rest are central differences.
    """
    if f.bc is None:
        raise ValueError("no boundary rule registered on field")
    if min(f.grid.n_cells) < 2:
        raise ValueError("gradients need at least 2 cells per axis")
    _require_finite(f)
    out = []
    for axis, h in enumerate(f.grid.h):
        interior = np.diff(f.values, axis=axis) / h
        lo, hi = _boundary_gradients(f, axis)
        out.append(np.concatenate([lo, interior, hi], axis=axis))
    return tuple(out)


def divergence(faces: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    """Cell-wise divergence of face-normal components (as from grad_face)."""
    out = np.zeros(grid.shape)
    for axis, (g, h) in enumerate(zip(faces, grid.h)):
        out += np.diff(g, axis=axis) / h
    return out


def laplacian(f: Field) -> np.ndarray:
    """5-point (3-point in 1-D) Laplacian honouring the field's boundary rule."""
    return divergence(grad_face(f), f.grid)


def grad_magnitude(f: Field) -> Field:
    """Cell-wise |grad f| from arithmetic means of adjacent face components."""
    sq = np.zeros(f.grid.shape)
    for axis, g in enumerate(grad_face(f)):
        n = f.grid.n_cells[axis]
        left = np.take(g, np.arange(n), axis=axis)
        right = np.take(g, np.arange(1, n + 1), axis=axis)
        sq += (0.5 * (left + right)) ** 2
    return Field(f.grid, np.sqrt(sq))


def grad_lp_norm(f: Field, p: float = 2) -> float:
    return lp_norm(grad_magnitude(f), p)


def face_energy(f: Field) -> float:
    """Discrete Dirichlet energy: sum over faces of gradient^2 times dual volume.

    This is the quantity produced by summation by parts against the 5-point
    (3-point) Laplacian, so discrete energy identities hold to round-off.
    """
    total = []
    for axis, g in enumerate(grad_face(f)):
        total.append((g * g * f.grid.face_weights(axis)).ravel())
    return math.fsum(np.concatenate(total))


def v_seminorm(states: Sequence, t1: float, t2: float) -> float:
    """sup_t ||u(t)||_2 plus the space-time L^2 norm of grad u over [t1, t2].

    ``states`` is any time-ordered sequence of objects with ``t`` and ``u``
    attributes; the time integral uses the trapezoid rule on the stored
    samples inside the window.
    """
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    times = np.array([s.t for s in states], dtype=float)
    if times.size == 0:
        raise ValueError("empty trajectory")
    slack = 1e-12 * max(1.0, abs(t2))
    if times.min() > t1 + slack or times.max() < t2 - slack:
        raise ValueError(
            f"window [{t1}, {t2}] not covered by trajectory [{times.min()}, {times.max()}]")
    inside = [s for s in states if t1 - slack <= s.t <= t2 + slack]
    sup_l2 = max(lp_norm(s.u, 2) for s in inside)
    if len(inside) < 2:
        return sup_l2
    t = np.array([s.t for s in inside])
    g2 = np.array([grad_lp_norm(s.u, 2) ** 2 for s in inside])
    return sup_l2 + math.sqrt(float(np.trapezoid(g2, t)))
