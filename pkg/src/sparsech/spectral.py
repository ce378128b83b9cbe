"""Neumann cosine basis on intervals and rectangles.

Fields are stored by their coefficients in the L2-orthonormal eigenbasis of
the Neumann Laplacian,

    e_k(x) = sqrt(c_k / L) cos(k pi x / L),   c_0 = 1, c_k = 2 (k > 0),

with tensor products in 2D.  Nodal values live on midpoint (DCT-II) grids.
The midpoint rule with M points integrates cos(m pi x / L) exactly for
m < 2M, so analysis after synthesis is the identity whenever M >= N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import BasisMismatchError, MeanValueError

__all__ = [
    "Quadrature",
    "SpectralBasis",
    "Field",
    "SpaceTimeField",
    "TimeGrid",
    "build_basis",
    "mean",
    "inner",
    "norm",
    "grad_norm_sq",
    "laplacian",
    "inv_neumann_laplacian",
    "dual_norm",
    "h1_norm",
    "apply_axes",
]


def _axis_modes(k: np.ndarray, length: float, x: np.ndarray) -> np.ndarray:
    """Matrix ``E[j, k] = e_k(x_j)`` for one axis."""
    k = np.asarray(k)
    scale = np.where(k == 0, math.sqrt(1.0 / length), math.sqrt(2.0 / length))
    return scale[None, :] * np.cos(np.pi * np.outer(x, k) / length)


def apply_axes(mats: Sequence[np.ndarray], arr: np.ndarray) -> np.ndarray:
    """Apply one matrix per trailing axis of ``arr`` (leading axes are batch)."""
    d = len(mats)
    out = arr
    for i, mat in enumerate(mats):
        ax = out.ndim - d + i
        out = np.moveaxis(np.tensordot(out, mat, axes=([ax], [1])), -1, ax)
    return out


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Midpoint collocation grid with synthesis/analysis matrices per axis."""

    nodes: tuple
    weights: tuple
    synth: tuple
    analysis: tuple

    @property
    def shape(self) -> tuple:
        return tuple(len(x) for x in self.nodes)

    @cached_property
    def cell_weights(self) -> np.ndarray:
        w = self.weights[0]
        for wi in self.weights[1:]:
            w = np.multiply.outer(w, wi)
        return w

    def mesh(self) -> tuple:
        return tuple(np.meshgrid(*self.nodes, indexing="ij"))

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate nodal values over the trailing spatial axes."""
        d = len(self.nodes)
        axes = tuple(range(values.ndim - d, values.ndim))
        return np.sum(values * self.cell_weights, axis=axes)


@dataclass(frozen=True)
class SpectralBasis:
    """Neumann-Laplacian eigenbasis on ``prod_i (0, L_i)``.

    Parameters
    ----------
    lengths : tuple of float
        Side lengths of the box, one per axis.
    modes : tuple of int
        Number of retained cosine modes per axis.
    dealias : float
        Oversampling factor of the grid used for pointwise products.
    """

    lengths: tuple
    modes: tuple
    dealias: float = 1.5
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        modes = tuple(int(v) for v in np.atleast_1d(self.modes))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "modes", modes)
        if len(lengths) not in (1, 2) or len(modes) != len(lengths):
            raise ValueError("dim must be 1 or 2 with one length and mode count per axis")
        if any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        if any(n < 4 for n in modes):
            raise ValueError(f"need at least 4 modes per axis, got {modes}")
        if not self.dealias >= 1.0:
            raise ValueError("dealias factor must be >= 1")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def shape(self) -> tuple:
        return self.modes

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues ``lambda_k`` laid out like the coefficient array."""
        lam = np.zeros(self.shape)
        for i, (n, L) in enumerate(zip(self.modes, self.lengths)):
            axis = (np.arange(n) * np.pi / L) ** 2
            idx = [None] * self.dim
            idx[i] = slice(None)
            lam = lam + axis[tuple(idx)]
        lam.flags.writeable = False
        return lam

    def eigenvalue_table(self) -> np.ndarray:
        return np.sort(self.eigenvalues.ravel())

    def quadrature(self, factor: float = 1.0) -> Quadrature:
        key = float(factor)
        if key not in self._cache:
            nodes, weights, synth, analysis = [], [], [], []
            for n, L in zip(self.modes, self.lengths):
                m = int(math.ceil(key * n))
                x = (np.arange(m) + 0.5) * L / m
                w = np.full(m, L / m)
                s = _axis_modes(np.arange(n), L, x)
                nodes.append(x)
                weights.append(w)
                synth.append(s)
                analysis.append((s * w[:, None]).T)
            self._cache[key] = Quadrature(tuple(nodes), tuple(weights), tuple(synth), tuple(analysis))
        return self._cache[key]

    @property
    def native(self) -> Quadrature:
        """Grid with as many nodes as modes; nodal values <-> coefficients is a bijection."""
        return self.quadrature(1.0)

    @property
    def padded(self) -> Quadrature:
        """Oversampled grid for pseudo-spectral products."""
        return self.quadrature(self.dealias)

    def to_nodal(self, coeffs: np.ndarray, quad: Quadrature | None = None) -> np.ndarray:
        quad = quad or self.native
        return apply_axes(quad.synth, coeffs)

    def from_nodal(self, values: np.ndarray, quad: Quadrature | None = None) -> np.ndarray:
        quad = quad or self.native
        return apply_axes(quad.analysis, values)

    def evaluate(self, coeffs: np.ndarray, *points: np.ndarray) -> np.ndarray:
        """Evaluate the expansion at a tensor grid of points (one array per axis)."""
        mats = [_axis_modes(np.arange(n), L, np.asarray(x, float))
                for n, L, x in zip(self.modes, self.lengths, points)]
        return apply_axes(mats, coeffs)

    def check_same(self, other: "SpectralBasis") -> None:
        if other is not self and other != self:
            raise BasisMismatchError("operands are defined on different spectral bases")


def build_basis(dim: int, lengths, modes_per_axis, dealias: float = 1.5) -> SpectralBasis:
    """Construct a Neumann cosine basis, broadcasting scalar lengths/modes to ``dim`` axes."""
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    lengths = np.broadcast_to(np.atleast_1d(np.asarray(lengths, float)), (dim,))
    modes = np.broadcast_to(np.atleast_1d(np.asarray(modes_per_axis, int)), (dim,))
    return SpectralBasis(tuple(lengths), tuple(modes), dealias)


@dataclass(frozen=True, eq=False)
class Field:
    """Scalar function on the spatial domain, stored by basis coefficients."""

    basis: SpectralBasis
    coeffs: np.ndarray

    # make numpy scalars defer to the reflected operators below
    __array_ufunc__ = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != self.basis.shape:
            raise BasisMismatchError(f"coefficient shape {c.shape} != basis shape {self.basis.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis: SpectralBasis) -> "Field":
        return cls(basis, np.zeros(basis.shape))

    @classmethod
    def constant(cls, basis: SpectralBasis, value: float) -> "Field":
        c = np.zeros(basis.shape)
        c[(0,) * basis.dim] = value * math.sqrt(basis.volume)
        return cls(basis, c)

    @classmethod
    def from_nodal(cls, basis: SpectralBasis, values, quad: Quadrature | None = None) -> "Field":
        return cls(basis, basis.from_nodal(np.asarray(values, float), quad))

    @classmethod
    def from_function(cls, basis: SpectralBasis, fn: Callable, factor: float = 4.0) -> "Field":
        """L2 projection of ``fn(*coords)`` computed on an oversampled grid."""
        quad = basis.quadrature(factor)
        return cls(basis, basis.from_nodal(np.asarray(fn(*quad.mesh()), float), quad))

    def nodal(self, quad: Quadrature | None = None) -> np.ndarray:
        return self.basis.to_nodal(self.coeffs, quad)

    def _other(self, other):
        if isinstance(other, Field):
            self.basis.check_same(other.basis)
            return other.coeffs
        if np.isscalar(other):
            return other
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        if np.isscalar(o):
            return self + Field.constant(self.basis, o)
        return Field(self.basis, self.coeffs + o)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Field(self.basis, -self.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Field(self.basis, scalar * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)


def _pair(f: Field, g: Field) -> None:
    f.basis.check_same(g.basis)


def mean(f: Field) -> float:
    """Spatial mean ``(1/|Omega|) int f``."""
    return float(f.coeffs[(0,) * f.basis.dim] / math.sqrt(f.basis.volume))


def inner(f: Field, g: Field) -> float:
    _pair(f, g)
    return float(np.sum(f.coeffs * g.coeffs))


def norm(f: Field) -> float:
    return float(np.sqrt(np.sum(f.coeffs ** 2)))


def grad_norm_sq(f: Field) -> float:
    return float(np.sum(f.basis.eigenvalues * f.coeffs ** 2))


def h1_norm(f: Field) -> float:
    return float(np.sqrt(norm(f) ** 2 + grad_norm_sq(f)))


def laplacian(f: Field) -> Field:
    return Field(f.basis, -f.basis.eigenvalues * f.coeffs)


def inv_neumann_laplacian(f: Field, rtol: float = 1e-10) -> Field:
    """Zero-mean solution ``z`` of ``-Laplace z = f`` with Neumann conditions.

    Raises
    ------
    MeanValueError
        If ``|mean(f)| > rtol * ||f||``.
    """
    if abs(mean(f)) > rtol * max(norm(f), np.finfo(float).tiny):
        raise MeanValueError(f"mean-value violation: mean {mean(f):.3e} for operator domain of zero-mean fields")
    lam = f.basis.eigenvalues
    z = np.zeros_like(f.coeffs)
    nz = lam > 0
    z[nz] = f.coeffs[nz] / lam[nz]
    return Field(f.basis, z)


def dual_norm(f: Field) -> float:
    """Hilbert norm on the dual of H1 built from the inverse Laplacian."""
    lam = f.basis.eigenvalues
    nz = lam > 0
    return float(np.sqrt(np.sum(f.coeffs[nz] ** 2 / lam[nz]) + mean(f) ** 2))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_m = m T / n_steps``."""

    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0 or int(self.n_steps) < 1:
            raise ValueError(f"need T > 0 and n_steps >= 1, got T={self.T}, n_steps={self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.T, self.n_steps + 1)
        t.flags.writeable = False
        return t

    @classmethod
    def from_times(cls, times) -> "TimeGrid":
        times = np.asarray(times, float)
        grid = cls(float(times[-1] - times[0]), len(times) - 1)
        if times[0] != 0.0 or not np.allclose(times, grid.nodes, rtol=0, atol=1e-12 * grid.T):
            raise BasisMismatchError("solvers require a uniform time grid starting at 0")
        return grid

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Time-indexed family of Fields sharing one basis.

    ``times`` always holds the full node list ``t_0 < ... < t_M``.  Node-valued
    fields carry ``M + 1`` coefficient rows; piecewise-constant fields (controls)
    carry ``M`` rows, row ``m`` being the value on ``[t_m, t_{m+1})``.
    """

    basis: SpectralBasis
    times: np.ndarray
    coeffs: np.ndarray

    __array_ufunc__ = None

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        c = np.array(self.coeffs, dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing with at least two nodes")
        if c.shape[1:] != self.basis.shape or c.shape[0] not in (len(t), len(t) - 1):
            raise BasisMismatchError(f"coefficient array {c.shape} incompatible with {len(t)} times "
                                     f"and basis shape {self.basis.shape}")
        t.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis, times, piecewise=False) -> "SpaceTimeField":
        n = len(times) - (1 if piecewise else 0)
        return cls(basis, times, np.zeros((n, *basis.shape)))

    @classmethod
    def from_nodal(cls, basis, times, values, quad: Quadrature | None = None) -> "SpaceTimeField":
        return cls(basis, times, basis.from_nodal(np.asarray(values, float), quad))

    @classmethod
    def from_fields(cls, times, fields: Sequence[Field]) -> "SpaceTimeField":
        basis = fields[0].basis
        for f in fields[1:]:
            basis.check_same(f.basis)
        return cls(basis, times, np.stack([f.coeffs for f in fields]))

    @property
    def piecewise(self) -> bool:
        return self.coeffs.shape[0] == len(self.times) - 1

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_times(self.times)

    def __len__(self):
        return self.coeffs.shape[0]

    def __getitem__(self, m) -> Field:
        return Field(self.basis, self.coeffs[m])

    def fields(self) -> list:
        return [self[m] for m in range(len(self))]

    def nodal(self, quad: Quadrature | None = None) -> np.ndarray:
        return self.basis.to_nodal(self.coeffs, quad)

    def time_weights(self) -> np.ndarray:
        """Quadrature weights in time: interval lengths or the trapezoid rule."""
        dt = np.diff(self.times)
        if self.piecewise:
            return dt
        w = np.zeros(len(self.times))
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        return w

    def check_compatible(self, other: "SpaceTimeField") -> None:
        self.basis.check_same(other.basis)
        if self.coeffs.shape != other.coeffs.shape or not np.array_equal(self.times, other.times):
            raise BasisMismatchError("space-time fields live on different time grids")

    def _other(self, other):
        if isinstance(other, SpaceTimeField):
            self.check_compatible(other)
            return other.coeffs
        if np.isscalar(other):
            c = np.zeros(self.coeffs.shape)
            c[(slice(None),) + (0,) * self.basis.dim] = other * math.sqrt(self.basis.volume)
            return c
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        if o is NotImplemented:
            return o
        return SpaceTimeField(self.basis, self.times, self.coeffs + o)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return SpaceTimeField(self.basis, self.times, -self.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return SpaceTimeField(self.basis, self.times, scalar * self.coeffs)

    __rmul__ = __mul__

    def l2_inner(self, other: "SpaceTimeField") -> float:
        """Space-time L2 inner product with the field's own time rule."""
        self.check_compatible(other)
        d = self.basis.dim
        per_time = np.sum(self.coeffs * other.coeffs, axis=tuple(range(1, d + 1)))
        return float(np.dot(self.time_weights(), per_time))

    def l2_norm(self) -> float:
        return math.sqrt(max(self.l2_inner(self), 0.0))

    def sup_h_norm(self) -> float:
        """``max_m ||f(t_m)||_H``."""
        d = self.basis.dim
        return float(np.sqrt(np.max(np.sum(self.coeffs ** 2, axis=tuple(range(1, d + 1))))))
