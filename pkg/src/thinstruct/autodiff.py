"""Forward-mode automatic differentiation with dual numbers.

A :class:`Dual` carries a value array of shape ``(...,)`` and a derivative
array of shape ``(..., K)`` holding partials w.r.t. K parameters. The solver
evaluates residual formulas componentwise on Duals, so Jacobians come out of
the same code path that computes the residuals (no finite differences).
"""

from __future__ import annotations

import numpy as np


class Dual:
    """Array of scalars with attached partial derivatives."""

    __slots__ = ("val", "der")

    # make `ndarray <op> Dual` defer to our reflected operators instead of
    # broadcasting Dual as an object scalar
    __array_ufunc__ = None

    def __init__(self, val, der):
        self.val = np.asarray(val, dtype=float)
        self.der = np.asarray(der, dtype=float)

    @classmethod
    def variable(cls, val, index: int, n_params: int) -> "Dual":
        """Seed a parameter: derivative 1 in slot ``index``, 0 elsewhere."""
        val = np.asarray(val, dtype=float)
        der = np.zeros(val.shape + (n_params,))
        der[..., index] = 1.0
        return cls(val, der)

    @classmethod
    def constant(cls, val, n_params: int) -> "Dual":
        val = np.asarray(val, dtype=float)
        return cls(val, np.zeros(val.shape + (n_params,)))

    def _coerce(self, other) -> "Dual":
        if isinstance(other, Dual):
            return other
        return Dual.constant(np.asarray(other, dtype=float), self.der.shape[-1])

    def __add__(self, other):
        o = self._coerce(other)
        return Dual(self.val + o.val, self.der + o.der)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __sub__(self, other):
        o = self._coerce(other)
        return Dual(self.val - o.val, self.der - o.der)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        o = self._coerce(other)
        return Dual(
            self.val * o.val,
            self.der * o.val[..., None] + o.der * self.val[..., None],
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        inv = 1.0 / o.val
        val = self.val * inv
        return Dual(val, (self.der - o.der * val[..., None]) * inv[..., None])

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __pow__(self, expo):
        if expo == 2:
            return self * self
        v = self.val**expo
        return Dual(v, (expo * self.val ** (expo - 1))[..., None] * self.der)


def constant(val, n_params: int) -> Dual:
    return Dual.constant(val, n_params)


# The helpers below accept either Duals or plain ndarrays, so residual
# formulas written against them serve both the Jacobian pass (Dual inputs)
# and plain value evaluation (float inputs).


def sqrt(x, guard: float = 1e-300):
    if not isinstance(x, Dual):
        return np.sqrt(x)
    v = np.sqrt(x.val)
    return Dual(v, x.der * (0.5 / np.maximum(v, guard))[..., None])


def sin(x):
    if not isinstance(x, Dual):
        return np.sin(x)
    return Dual(np.sin(x.val), np.cos(x.val)[..., None] * x.der)


def cos(x):
    if not isinstance(x, Dual):
        return np.cos(x)
    return Dual(np.cos(x.val), -np.sin(x.val)[..., None] * x.der)


def absolute(x):
    """|x| with subgradient 0 at exactly 0."""
    if not isinstance(x, Dual):
        return np.abs(x)
    return Dual(np.abs(x.val), np.sign(x.val)[..., None] * x.der)


def hinge(x):
    """max(0, x) with one-sided derivative: 0 in the dead zone (x < 0),
    the identity branch for x >= 0."""
    if not isinstance(x, Dual):
        return np.maximum(0.0, x)
    on = (x.val >= 0.0).astype(float)
    return Dual(np.maximum(0.0, x.val), on[..., None] * x.der)


def norm(components, guard: float = 1e-12):
    """Euclidean norm of a list of components (guarded at 0 for Duals)."""
    s = components[0] * components[0]
    for c in components[1:]:
        s = s + c * c
    if not isinstance(s, Dual):
        return np.sqrt(s)
    v = np.sqrt(s.val)
    return Dual(v, s.der * (0.5 / np.maximum(v, guard))[..., None])


def dot(a, b):
    s = a[0] * b[0]
    for x, y in zip(a[1:], b[1:]):
        s = s + x * y
    return s
