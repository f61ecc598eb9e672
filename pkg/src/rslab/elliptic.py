"""Elliptic special functions on C / (Z + tau Z).

The odd theta function is

    theta(z) = 2 sum_{n>=0} (-1)^n q^{(n+1/2)^2} sin((2n+1) pi z),  q = exp(i pi tau),

normalized so that theta'(0) has the sign of the leading series term.  All
pole-bearing functions (Kronecker phi, Eisenstein E1/E2, Weierstrass wp/zeta)
accept :class:`rslab.diffkit.Dual` arguments, so model builders written on top
of them are differentiable by forward mode.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from rslab.diffkit import Dual, base_value, exp

MAX_PUBLIC_ORDER = 3
_SERIES_REL = 1e-18
_MAX_TERMS = 400


class EllipticError(ValueError):
    pass


class InvalidModulusError(EllipticError):
    pass


class PoleProximityError(EllipticError):
    """Raised when an argument falls within the guard radius of a lattice point."""

    def __init__(self, argument, distance: float, guard: float, where: str = ""):
        self.argument = argument
        self.distance = distance
        self.guard = guard
        self.where = where
        super().__init__(
            f"{where or 'argument'} {argument!r} is {distance:.3g} from the lattice (guard {guard:.3g})"
        )


class UnsupportedOrderError(EllipticError):
    pass


@lru_cache(maxsize=64)
def _nome_terms(tau: complex) -> tuple:
    """Coefficients ``2 (-1)^n q^{(n+1/2)^2}`` down to underflow."""
    out = []
    for n in range(_MAX_TERMS):
        t = 2 * (-1) ** n * cmath.exp(1j * math.pi * tau * (n + 0.5) ** 2)
        if abs(t) < 1e-300:
            break
        out.append(t)
    return tuple(out)


@dataclass(frozen=True)
class Modulus:
    """Elliptic modulus ``tau`` with a pole-guard radius."""

    tau: complex
    guard: float = 1e-3
    _consts: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tau = complex(self.tau)
        if not tau.imag > 0:
            raise InvalidModulusError(f"Im(tau) must be positive, got tau={tau}")
        if self.guard < 0:
            raise ValueError("guard must be non-negative")
        object.__setattr__(self, "tau", tau)
        d1 = _series(0j, tau, 1)
        d3 = _series(0j, tau, 3)
        object.__setattr__(self, "_consts", (d1, d3))

    @property
    def theta_prime0(self) -> complex:
        return self._consts[0]

    @property
    def theta_triple0(self) -> complex:
        return self._consts[1]

    @property
    def eta0(self) -> complex:
        return -self._consts[1] / (6 * self._consts[0])

    def with_guard(self, guard: float) -> "Modulus":
        return Modulus(self.tau, guard)


def as_modulus(m) -> Modulus:
    if isinstance(m, Modulus):
        return m
    return Modulus(complex(m))


# ---------------------------------------------------------------------------
# theta series


def _series(z: complex, tau: complex, order: int) -> complex:
    """Term-wise differentiated series at an already reduced argument."""
    total = 0j
    shift = order * math.pi / 2
    for n, coef in enumerate(_nome_terms(tau)):
        k = (2 * n + 1) * math.pi
        term = coef * k**order * cmath.sin(k * z + shift)
        total += term
        if abs(term) < _SERIES_REL * (abs(total) + 1):
            break
    return total


def reduce_argument(z: complex, tau: complex):
    """Write ``z = z0 + m + n*tau`` with ``z0 = a + b*tau``, ``a, b`` in [-1/2, 1/2]."""
    b = z.imag / tau.imag
    n = round(b)
    z1 = z - n * tau
    a = (z1 - (z1.imag / tau.imag) * tau).real
    m = round(a)
    return z1 - m, m, n


def _theta_derivs(z: complex, tau: complex, order: int) -> complex:
    z = complex(z)
    z0, m, n = reduce_argument(z, tau)
    sign = -1 if (m + n) % 2 else 1
    if n == 0:
        return sign * _series(z0, tau, order)
    # theta(z0 + n tau) = (-1)^n exp(-i pi tau n^2 - 2 pi i n z0) theta(z0)
    g = cmath.exp(-1j * math.pi * tau * n * n - 2j * math.pi * n * z0)
    bfac = -2j * math.pi * n
    total = 0j
    for r in range(order + 1):
        total += math.comb(order, r) * bfac ** (order - r) * _series(z0, tau, r)
    return sign * g * total


def _theta_any(z, tau: complex, order: int):
    if isinstance(z, Dual):
        return Dual(_theta_any(z.value, tau, order), _theta_any(z.value, tau, order + 1) * z.tangent)
    return _theta_derivs(z, tau, order)


def theta(z, m) -> complex:
    """Odd Jacobi theta function."""
    return _theta_any(z, as_modulus(m).tau, 0)


def theta_d(z, m, order: int = 1):
    """``order``-th derivative of :func:`theta`, ``0 <= order <= 3``."""
    if order < 0 or order > MAX_PUBLIC_ORDER:
        raise UnsupportedOrderError(f"theta derivatives of order {order} are not provided")
    return _theta_any(z, as_modulus(m).tau, order)


def theta_series_unreduced(z: complex, m, order: int = 0) -> complex:
    """Direct series without argument reduction; used to check the reduction laws."""
    return _series(complex(z), as_modulus(m).tau, order)


# ---------------------------------------------------------------------------
# lattice guard


def lattice_distance(z, m) -> float:
    tau = as_modulus(m).tau
    z0, _, _ = reduce_argument(complex(base_value(z)), tau)
    return min(abs(z0 - (a + b * tau)) for a in (-1, 0, 1) for b in (-1, 0, 1))


def check_guard(z, m: Modulus, where: str = "") -> None:
    if m.guard <= 0:
        return
    d = lattice_distance(z, m)
    if d < m.guard:
        raise PoleProximityError(base_value(z), d, m.guard, where)


# ---------------------------------------------------------------------------
# logarithmic derivatives


def _log_derivs(z: complex, tau: complex, top: int) -> list:
    """``[L_1, ..., L_top]`` with ``L_n = d^n/dz^n log theta(z)``."""
    th = _theta_derivs(z, tau, 0)
    ell = [None] + [_theta_derivs(z, tau, k) / th for k in range(1, top + 1)]
    big = [None]
    for n in range(1, top + 1):
        v = ell[n]
        for k in range(1, n):
            v -= math.comb(n - 1, k - 1) * big[k] * ell[n - k]
        big.append(v)
    return big


def _log_deriv_any(z, tau: complex, n: int):
    if isinstance(z, Dual):
        return Dual(_log_deriv_any(z.value, tau, n), _log_deriv_any(z.value, tau, n + 1) * z.tangent)
    return _log_derivs(complex(z), tau, n)[n]


def e1(u, m):
    """First Eisenstein function ``theta'/theta``."""
    m = as_modulus(m)
    check_guard(u, m, "E1")
    return _log_deriv_any(u, m.tau, 1)


def e2(u, m):
    """Second Eisenstein function ``-E1'``."""
    m = as_modulus(m)
    check_guard(u, m, "E2")
    return -_log_deriv_any(u, m.tau, 2)


def wp(u, m):
    """Weierstrass ``wp = E2 + theta'''(0)/(3 theta'(0))``."""
    m = as_modulus(m)
    return e2(u, m) - 2 * m.eta0


def wp_d(u, m):
    """Derivative of ``wp``."""
    m = as_modulus(m)
    check_guard(u, m, "wp'")
    return -_log_deriv_any(u, m.tau, 3)


def zeta_w(u, m):
    m = as_modulus(m)
    return e1(u, m) + 2 * m.eta0 * u


def sigma_w(u, m):
    m = as_modulus(m)
    return theta(u, m) / m.theta_prime0 * exp(m.eta0 * u * u)


def eta0(m) -> complex:
    return as_modulus(m).eta0


# ---------------------------------------------------------------------------
# Kronecker function


def kronecker_phi(z, u, m):
    """``phi(z, u) = theta'(0) theta(z+u) / (theta(z) theta(u))``."""
    m = as_modulus(m)
    check_guard(z, m, "phi: z")
    check_guard(u, m, "phi: u")
    tau = m.tau
    return m.theta_prime0 * _theta_any(z + u, tau, 0) / (_theta_any(z, tau, 0) * _theta_any(u, tau, 0))


phi = kronecker_phi


def phi_dz(z, u, m):
    m = as_modulus(m)
    check_guard(z + u, m, "phi_dz: z+u")
    return (e1(z + u, m) - e1(z, m)) * kronecker_phi(z, u, m)


def phi_du(z, u, m):
    """``d phi / du``; also serves as ``f(z, u)`` in the field V-matrix."""
    m = as_modulus(m)
    check_guard(z + u, m, "phi_du: z+u")
    return (e1(z + u, m) - e1(u, m)) * kronecker_phi(z, u, m)


f = phi_du


# ---------------------------------------------------------------------------
# identity suite


IDENTITY_NAMES = (
    "fay",
    "e1_sum",
    "three_term",
    "wp_product",
    "phi_dz",
    "phi_du",
    "parity",
    "quasi_periodicity",
)


def _rand_point(rng, m: Modulus):
    tau = m.tau
    a, b = rng.uniform(-0.5, 0.5, size=2)
    return complex(a + b * tau)


def _sample(rng, m: Modulus, count: int, combos, guard: float):
    """Draw ``count`` points such that every value of ``combos(*pts)`` is guarded."""
    for _ in range(1000):
        pts = [_rand_point(rng, m) for _ in range(count)]
        if all(lattice_distance(c, m) >= guard for c in combos(*pts)):
            return pts
    raise EllipticError("sampler exhausted after 1000 rejections")


def _suite_combos(z1, z2, u1, u2):
    v = u1 / 2
    return [
        z1, z2, u1, u2, z1 - z2, u1 + u2, z1 + u1, z2 + u2, z1 + u1 + u2, z2 + u1 + u2,
        v, u1 - v, u2 + v, u1 - u2 - v, z1 + u1 - v, z2 + u2 + v, z1 - z2 + v,
        z1 + u2 + v, z2 + u1 - v, z1 - z2 + u1 - u2 - v, z1 - u1,
    ]


def _rel(lhs, rhs) -> float:
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def _fd(fn, x, h=1e-4):
    # five-point stencil keeps truncation error near 1e-15 at this step
    return (-fn(x + 2 * h) + 8 * fn(x + h) - 8 * fn(x - h) + fn(x - 2 * h)) / (12 * h)


def identity_suite(seed: int, trials: int, m, guard: float = 0.05) -> dict:
    """Max relative residual of each addition formula over ``trials`` random points."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    m = as_modulus(m)
    rng = np.random.default_rng(seed)
    ph = lambda z, u: kronecker_phi(z, u, m)  # noqa: E731
    E1 = lambda u: e1(u, m)  # noqa: E731
    out = {name: 0.0 for name in IDENTITY_NAMES}
    for _ in range(trials):
        z1, z2, u1, u2 = _sample(rng, m, 4, _suite_combos, guard)
        lhs = ph(z1, u1) * ph(z2, u2)
        rhs = ph(z1, u1 + u2) * ph(z2 - z1, u2) + ph(z2, u1 + u2) * ph(z1 - z2, u1)
        out["fay"] = max(out["fay"], _rel(lhs, rhs))

        lhs = ph(z1, u1) * ph(z1, u2)
        rhs = ph(z1, u1 + u2) * (E1(z1) + E1(u1) + E1(u2) - E1(z1 + u1 + u2))
        out["e1_sum"] = max(out["e1_sum"], _rel(lhs, rhs))

        v = u1 / 2
        z, w = z1, z2
        lhs = ph(z, u1 - v) * ph(w, u2 + v) * ph(z - w, v) - ph(z, u2 + v) * ph(w, u1 - v) * ph(
            z - w, u1 - u2 - v
        )
        rhs = ph(z, u1) * ph(w, u2) * (E1(v) - E1(u1 - u2 - v) + E1(u1 - v) - E1(u2 + v))
        out["three_term"] = max(out["three_term"], _rel(lhs, rhs))

        lhs = ph(z1, u1) * ph(z1, -u1)
        rhs = wp(z1, m) - wp(u1, m)
        alt = e2(z1, m) - e2(u1, m)
        out["wp_product"] = max(out["wp_product"], _rel(lhs, rhs), _rel(lhs, alt))

        lhs = phi_dz(z1, u1, m)
        rhs = _fd(lambda t: ph(t, u1), z1)
        out["phi_dz"] = max(out["phi_dz"], _rel(lhs, rhs))
        lhs = phi_du(z1, u1, m)
        rhs = _fd(lambda t: ph(z1, t), u1)
        out["phi_du"] = max(out["phi_du"], _rel(lhs, rhs))

        par = max(
            _rel(ph(z1, u1), -ph(-z1, -u1)),
            _rel(E1(u1), -E1(-u1)),
            _rel(e2(u1, m), e2(-u1, m)),
            _rel(theta(-z1, m), -theta(z1, m)),
        )
        out["parity"] = max(out["parity"], par)

        tau = m.tau
        qp = max(
            _rel(ph(z1 + 1, u1), ph(z1, u1)),
            _rel(ph(z1 + tau, u1), cmath.exp(-2j * math.pi * u1) * ph(z1, u1)),
            _rel(theta(z1 + 1, m), -theta(z1, m)),
            _rel(theta(z1 + tau, m), -cmath.exp(-1j * math.pi * tau - 2j * math.pi * z1) * theta(z1, m)),
            _rel(wp(u1 + 1, m), wp(u1, m)),
            _rel(wp(u1 + tau, m), wp(u1, m)),
        )
        out["quasi_periodicity"] = max(out["quasi_periodicity"], qp)
    return out
