"""Double-well potential and its convex/perturbation split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Field

__all__ = ["QuarticPotential", "eval_derivative", "apply_pointwise", "nodal_derivative"]

_PARTS = ("full", "convex", "perturbation")


@dataclass(frozen=True)
class QuarticPotential:
    """``f(x) = scale * (x**2 - well**2)**2``.

    Split as ``f1(x) = scale * x**4`` (convex, nonnegative, ``f1(0) = 0``) and
    ``f2(x) = -2 scale well**2 x**2 + scale well**4`` (Lipschitz derivative).
    The defaults give the classical ``(x**2 - 1)**2 / 4``.
    """

    scale: float = 0.25
    well: float = 1.0
    name: str = "quartic"

    def __post_init__(self):
        if not self.scale > 0 or not self.well > 0:
            raise ValueError("quartic potential needs positive scale and well position")

    def convex(self, order: int, x):
        c = self.scale
        x = np.asarray(x, dtype=float)
        if order == 0:
            return c * x ** 4
        if order == 1:
            return 4 * c * x ** 3
        if order == 2:
            return 12 * c * x ** 2
        if order == 3:
            return 24 * c * x
        return np.full_like(x, 24 * c)

    def perturbation(self, order: int, x):
        c, a2 = self.scale, self.well ** 2
        x = np.asarray(x, dtype=float)
        if order == 0:
            return -2 * c * a2 * x ** 2 + c * a2 * a2
        if order == 1:
            return -4 * c * a2 * x
        if order == 2:
            return np.full_like(x, -4 * c * a2)
        return np.zeros_like(x)

    def full(self, order: int, x):
        c, a2 = self.scale, self.well ** 2
        x = np.asarray(x, dtype=float)
        # closed forms avoid cancellation between the two parts
        if order == 0:
            return c * (x * x - a2) ** 2
        if order == 1:
            return 4 * c * x * (x * x - a2)
        if order == 2:
            return 4 * c * (3 * x * x - a2)
        if order == 3:
            return 24 * c * x
        return np.full_like(x, 24 * c)

    def default_stabilization(self, bound: float = 2.0) -> float:
        """``max |f''|`` over ``[-bound, bound]``."""
        c, a2 = self.scale, self.well ** 2
        return float(max(abs(4 * c * (3 * bound ** 2 - a2)), 4 * c * a2))


def eval_derivative(spec: QuarticPotential, order: int, x, part: str = "full"):
    """Derivative of order 0..4 of ``f`` (or of its ``convex``/``perturbation`` part)."""
    if order not in (0, 1, 2, 3, 4):
        raise ValueError(f"derivative order must be in 0..4, got {order}")
    if part not in _PARTS:
        raise ValueError(f"part must be one of {_PARTS}")
    out = getattr(spec, part)(order, x)
    return float(out) if np.ndim(out) == 0 else out


def nodal_derivative(spec: QuarticPotential, order: int, phi: Field) -> np.ndarray:
    """``f^(order)(phi)`` sampled on the padded grid."""
    return eval_derivative(spec, order, phi.nodal(phi.basis.padded))


def apply_pointwise(spec: QuarticPotential, order: int, phi: Field) -> Field:
    """Galerkin coefficients ``(f^(order)(phi), e_k)`` by padded collocation."""
    quad = phi.basis.padded
    return Field(phi.basis, phi.basis.from_nodal(nodal_derivative(spec, order, phi), quad))
