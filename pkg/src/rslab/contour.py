"""Trapezoid contour quadrature for Laurent coefficients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def laurent_coeffs(fn, rho: float, K: int, orders, center: complex = 0.0) -> dict:
    """``c_m = (1/K) sum_k fn(center + rho e^{i theta_k}) rho^{-m} e^{-i m theta_k}``.

    ``fn`` may return a scalar or an ndarray; each coefficient has the same shape.
    """
    thetas = 2 * np.pi * np.arange(K) / K
    samples = [np.asarray(fn(center + rho * np.exp(1j * t)), dtype=complex) for t in thetas]
    out = {}
    for m in orders:
        acc = sum(s * np.exp(-1j * m * t) for s, t in zip(samples, thetas))
        out[m] = acc / K * rho ** (-m)
    return out


def residue(fn, rho: float = 0.05, K: int = 32, center: complex = 0.0):
    return laurent_coeffs(fn, rho, K, [-1], center)[-1]


@dataclass(frozen=True)
class LaurentWindow:
    """Contour radius, sample count and the range of orders ``[lo, hi]`` to extract."""

    rho: float = 1e-3
    K: int = 16
    orders: tuple = (-2, 1)

    def __post_init__(self):
        lo, hi = self.orders
        if self.rho <= 0:
            raise ValueError("contour radius must be positive")
        if self.K < 8 or self.K < 2 * (hi - lo + 1):
            raise ValueError(f"K={self.K} too small for orders {self.orders}")

    @property
    def order_range(self) -> range:
        return range(self.orders[0], self.orders[1] + 1)

    def coeffs(self, fn, center: complex = 0.0) -> dict:
        return laurent_coeffs(fn, self.rho, self.K, self.order_range, center)

    def halved(self) -> "LaurentWindow":
        return LaurentWindow(self.rho / 2, self.K, self.orders)

    def to_json(self) -> dict:
        return {"rho": self.rho, "K": self.K, "orders": list(self.orders)}
