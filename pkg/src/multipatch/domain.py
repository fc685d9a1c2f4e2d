"""Phenotype-space discretization: Dirichlet box, stencil Laplacian, quadrature.

The continuous phenotype space is truncated to the box ``[-R, R]^n`` with
zero boundary values.  A grid with ``m`` interior nodes per axis has
spacing ``h = 2R/(m+1)``; node coordinates along each axis are
``h*(j - (m-1)/2)`` for ``j = 0..m-1``, which is symmetric about the
origin exactly, including in floating point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class DiscreteDomain:
    """Uniform tensor grid on the open box (-R, R)^n with Dirichlet boundary.

    ``m`` is the number of interior nodes per axis.  Values of 16 and up
    are sensible for production runs; smaller grids are accepted for
    oracle-sized problems and examples.
    """

    n: int
    radius: float
    m: int

    def __post_init__(self) -> None:
        if self.n not in (1, 2, 3):
            raise ValueError(f"phenotype dimension must be 1, 2 or 3, got {self.n}")
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValueError(f"box radius must be positive and finite, got {self.radius}")
        if self.m < 2:
            raise ValueError(f"need at least 2 interior nodes per axis, got {self.m}")

    @property
    def h(self) -> float:
        return 2.0 * self.radius / (self.m + 1)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def size(self) -> int:
        return self.m**self.n

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis, exactly antisymmetric."""
        return self.h * (np.arange(self.m) - (self.m - 1) / 2.0)

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (size, n), lexicographic in (x1..xn)."""
        ax = self.axis()
        grids = np.meshgrid(*([ax] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def cell_volume(self) -> float:
        return self.h**self.n


def build_domain(n: int, radius: float, m: int) -> DiscreteDomain:
    """Construct a validated grid (n dims, half-width ``radius``, m interior nodes)."""
    return DiscreteDomain(n=n, radius=float(radius), m=int(m))


@dataclass
class Field:
    """Scalar grid function: flat float64 values in C order over the axes."""

    domain: DiscreteDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != (self.domain.size,):
            raise ValueError(
                f"field values must be flat with {self.domain.size} entries, got shape {v.shape}"
            )
        self.values = v

    def grid(self) -> np.ndarray:
        """Values reshaped to the grid, shape dims (a view)."""
        return self.values.reshape(self.domain.dims)


def field_from_function(dom: DiscreteDomain, fn) -> Field:
    """Sample ``fn(point) -> float`` (vectorized over rows) on the nodes."""
    pts = dom.nodes()
    vals = np.asarray(fn(pts), dtype=np.float64).reshape(dom.size)
    return Field(dom, vals)


def apply_laplacian(f: Field) -> Field:
    """Second-order central-difference Laplacian with Dirichlet boundary."""
    dom = f.domain
    out = _kernels.lap_apply(f.values[None, :], dom.dims, 1.0 / dom.h**2)
    return Field(dom, out[0])


def integrate(f: Field) -> float:
    """Midpoint quadrature h^n * sum(values)."""
    return f.domain.cell_volume() * float(f.values.sum())


def inner_product(f: Field, g: Field) -> float:
    """Quadrature inner product h^n * sum(f*g); domains must match."""
    if f.domain != g.domain:
        raise ValueError("inner product requires fields on the same domain")
    return f.domain.cell_volume() * float(np.dot(f.values, g.values))


def norm(f: Field) -> float:
    """Quadrature L2 norm sqrt(<f, f>)."""
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def save_field_csv(f: Field, path) -> None:
    """Write ``x1..xn,value`` rows in lexicographic node order."""
    dom = f.domain
    cols = np.column_stack([dom.nodes(), f.values])
    header = ",".join([f"x{d + 1}" for d in range(dom.n)] + ["value"])
    np.savetxt(path, cols, fmt="%.17g", delimiter=",", header=header, comments="")


def load_field_csv(path, dom: DiscreteDomain) -> Field:
    """Read a field written by :func:`save_field_csv`; coordinates must match."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape != (dom.size, dom.n + 1):
        raise ValueError(
            f"CSV shape {raw.shape} does not match domain with {dom.size} nodes in {dom.n}D"
        )
    if not np.array_equal(raw[:, : dom.n], dom.nodes()):
        raise ValueError("CSV node coordinates do not match the domain grid")
    return Field(dom, raw[:, dom.n])
