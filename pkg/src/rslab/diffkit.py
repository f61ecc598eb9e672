"""Forward-mode dual numbers over C and the canonical Poisson bracket engine.

A :class:`Dual` carries a complex value and a tangent.  The tangent may be a
plain complex number or a 1-D array, in which case several directional
derivatives are propagated in one pass (vector forward mode).  Duals nest:
the value and tangent may themselves be duals.

Observables are plain callables ``f(state)`` returning a complex scalar or an
``N x N`` matrix.  States are dataclasses with array fields ``p`` and ``q``
(any shape), see :mod:`rslab.states`.
"""

from __future__ import annotations

import cmath
import dataclasses
from typing import Any, Callable

import numpy as np

from rslab import tensor

Observable = Callable[[Any], Any]


class Dual:
    """Dual number ``value + tangent * eps`` with ``eps**2 = 0``."""

    __slots__ = ("value", "tangent")
    # numpy scalars must defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value, tangent=0.0):
        self.value = value
        self.tangent = tangent

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.tangent!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        return Dual(self.value + other, self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.tangent - other.tangent)
        return Dual(self.value - other, self.tangent)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.tangent + self.tangent * other.value,
            )
        return Dual(self.value * other, self.tangent * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.value
            val = self.value * inv
            return Dual(val, (self.tangent - val * other.tangent) * inv)
        inv = 1.0 / other
        return Dual(self.value * inv, self.tangent * inv)

    def __rtruediv__(self, other):
        inv = 1.0 / self.value
        val = other * inv
        return Dual(val, -val * inv * self.tangent)

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            return exp(exponent * log(self))
        if exponent == 0:
            return Dual(self.value**0, 0.0 * self.tangent)
        return Dual(self.value**exponent, exponent * self.value ** (exponent - 1) * self.tangent)


def base_value(x):
    """Strip every dual layer and return the underlying number."""
    while isinstance(x, Dual):
        x = x.value
    return x


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.value)
        return Dual(e, e * x.tangent)
    return cmath.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.value), x.tangent / x.value)
    return cmath.log(x)


def sqrt(x):
    """Principal square root."""
    if isinstance(x, Dual):
        r = sqrt(x.value)
        return Dual(r, x.tangent / (2 * r))
    return cmath.sqrt(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.value), cos(x.value) * x.tangent)
    return cmath.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.value), -sin(x.value) * x.tangent)
    return cmath.cos(x)


def prod(values):
    out = 1.0
    for v in values:
        out = out * v
    return out


# ---------------------------------------------------------------------------
# jacobians of observables


def _coords(state):
    p = np.asarray(state.p, dtype=complex)
    q = np.asarray(state.q, dtype=complex)
    return p, q


def _lift(state):
    p, q = _coords(state)
    size = p.size
    dim = 2 * size
    eye = np.eye(dim, dtype=complex)
    lp = np.empty(p.shape, dtype=object)
    lq = np.empty(q.shape, dtype=object)
    for k, idx in enumerate(np.ndindex(p.shape)):
        lp[idx] = Dual(complex(p[idx]), eye[k])
        lq[idx] = Dual(complex(q[idx]), eye[size + k])
    return dataclasses.replace(state, p=lp, q=lq), dim


def _split(result, dim):
    """Return ``(value, tangent)`` arrays with tangent axis last."""
    arr = np.asarray(result, dtype=object) if not isinstance(result, Dual) else None
    if arr is None or arr.ndim == 0:
        item = result if arr is None else arr.item()
        if isinstance(item, Dual):
            t = np.broadcast_to(np.asarray(item.tangent, dtype=complex), (dim,))
            return complex(item.value), t.copy()
        return complex(item), np.zeros(dim, dtype=complex)
    value = np.empty(arr.shape, dtype=complex)
    tang = np.zeros(arr.shape + (dim,), dtype=complex)
    for idx in np.ndindex(arr.shape):
        item = arr[idx]
        if isinstance(item, Dual):
            value[idx] = item.value
            tang[idx] = item.tangent
        else:
            value[idx] = item
    return value, tang


def jacobian(f: Observable, state):
    """Value of ``f`` and its partials with respect to ``p`` and ``q``.

    Returns ``(value, d_p, d_q)``; the partial arrays carry the flattened
    coordinate index as their last axis.
    """
    lifted, dim = _lift(state)
    value, tang = _split(f(lifted), dim)
    half = dim // 2
    return value, tang[..., :half], tang[..., half:]


def partials(f: Observable, state):
    """Exact holomorphic gradient of a scalar observable.

    Returns ``(df/dp, df/dq)`` shaped like ``state.p`` and ``state.q``.
    """
    p, q = _coords(state)
    _, dp, dq = jacobian(f, state)
    return dp.reshape(p.shape), dq.reshape(q.shape)


def poisson_bracket(f: Observable, g: Observable, state) -> complex:
    """Canonical bracket with ``{p_i, q_j} = delta_ij``."""
    _, fp, fq = jacobian(f, state)
    _, gp, gq = jacobian(g, state)
    return complex(fp @ gq - fq @ gp)


def bracket_tensor(a_jac, b_jac) -> np.ndarray:
    """Assemble ``{A_1, B_2}`` from precomputed jacobians ``(value, d_p, d_q)``."""
    _, ap, aq = a_jac
    _, bp, bq = b_jac
    coeffs = np.einsum("ija,kla->ijkl", ap, bq) - np.einsum("ija,kla->ijkl", aq, bp)
    return tensor.from_coeffs(coeffs)


def matrix_poisson_bracket(a: Observable, b: Observable, state) -> np.ndarray:
    """``sum E_ij (x) E_kl {A_ij, B_kl}`` as an ``N^2 x N^2`` operator."""
    return bracket_tensor(jacobian(a, state), jacobian(b, state))


# ---------------------------------------------------------------------------
# finite-difference oracle, kept independent of the dual path


def fd_jacobian(f: Observable, state, step: float = 1e-6):
    p, q = _coords(state)
    coords = np.concatenate([p.ravel(), q.ravel()])
    size = p.size

    def rebuild(x):
        return dataclasses.replace(
            state, p=x[:size].reshape(p.shape), q=x[size:].reshape(q.shape)
        )

    value = np.asarray(f(state), dtype=complex)
    cols = []
    for k in range(coords.size):
        xp = coords.copy()
        xm = coords.copy()
        xp[k] += step
        xm[k] -= step
        fp = np.asarray(f(rebuild(xp)), dtype=complex)
        fm = np.asarray(f(rebuild(xm)), dtype=complex)
        cols.append((fp - fm) / (2 * step))
    tang = np.stack(cols, axis=-1)
    return value, tang[..., :size], tang[..., size:]


def fd_poisson_bracket(f: Observable, g: Observable, state, step: float = 1e-6) -> complex:
    _, fp, fq = fd_jacobian(f, state, step)
    _, gp, gq = fd_jacobian(g, state, step)
    return complex(fp @ gq - fq @ gp)


def fd_matrix_poisson_bracket(a: Observable, b: Observable, state, step: float = 1e-6) -> np.ndarray:
    return bracket_tensor(fd_jacobian(a, state, step), fd_jacobian(b, state, step))
