"""Truncated Taylor (jet) arithmetic.

A jet stores the coefficients c0..cK of a univariate polynomial in the
trajectory time parameter, truncated at a fixed order K.  Arithmetic is
exact truncation: products discard terms above K, division is the usual
power-series recurrence and requires a nonzero constant term.

Coefficients live on axis 0 of a numpy array, so a single jet can carry
a whole batch of evaluation points in its trailing axes.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet", "JetDivisionError"]


class JetDivisionError(ZeroDivisionError):
    """Division by a jet whose constant term vanishes somewhere."""


class Jet:
    __slots__ = ("coeffs",)

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = np.asarray(coeffs, dtype=float)

    @classmethod
    def constant(cls, value, order: int, batch_shape: tuple[int, ...] = ()) -> "Jet":
        c = np.zeros((order + 1, *batch_shape))
        c[0] = value
        return cls(c)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    def coefficient(self, k: int) -> np.ndarray:
        return self.coeffs[k]

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.order != self.order:
                raise ValueError(f"jet order mismatch: {self.order} vs {other.order}")
            return other
        return Jet.constant(other, self.order, np.broadcast_shapes(self.batch_shape, np.shape(other)))

    def __add__(self, other):
        other = self._coerce(other)
        return Jet(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        return Jet(self.coeffs - other.coeffs)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        K = self.order
        a, b = self.coeffs, other.coeffs
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for k in range(K + 1):
            for j in range(k + 1):
                out[k] += a[j] * b[k - j]
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        return other._reciprocal_mul(self)

    def __rtruediv__(self, other):
        return self._reciprocal_mul(self._coerce(other))

    def _reciprocal_mul(self, num: "Jet") -> "Jet":
        """Compute num / self via the power-series recurrence."""
        K = self.order
        b = self.coeffs
        if np.any(b[0] == 0.0):
            raise JetDivisionError("jet division by zero constant term")
        a = num.coeffs
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        out[0] = a[0] / b[0]
        for k in range(1, K + 1):
            acc = a[k].copy() if isinstance(a[k], np.ndarray) else np.asarray(a[k], dtype=float)
            for j in range(k):
                acc = acc - out[j] * b[k - j]
            out[k] = acc / b[0]
        return Jet(out)

    def __pow__(self, exponent: int):
        if not isinstance(exponent, (int, np.integer)):
            raise TypeError("jet powers must be integers")
        if exponent < 0:
            return (Jet.constant(1.0, self.order, self.batch_shape) / self) ** (-exponent)
        result = Jet.constant(1.0, self.order, self.batch_shape)
        base = self
        e = int(exponent)
        while e > 0:
            if e & 1:
                result = result * base
            base = base * base if e > 1 else base
            e >>= 1
        return result

    def __repr__(self):
        return f"Jet(order={self.order}, batch={self.batch_shape})"
