"""Lax matrices, Hamiltonians and equations of motion for RS, CM and the RS chain.

Builders return ``N x N`` ndarrays.  When the state carries dual numbers the
result is an object array of duals, which is what :mod:`rslab.diffkit`
consumes; otherwise it is a complex array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from rslab import diffkit as dk
from rslab import elliptic as el
from rslab.contour import laurent_coeffs
from rslab.states import ChainState, ModelParams, RSState, WEIGHT_VARIANTS, tilde_p

LABELS = ("RS-L", "RS-M", "CM-L", "chain-L", "monodromy", "field-U", "field-V")


class DegenerateWeightError(ValueError):
    pass


@dataclass
class SpectralMatrix:
    entries: np.ndarray
    spectral_parameter: complex
    label: str
    site: int | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")

    def to_json(self) -> str:
        ent = np.asarray(self.entries, dtype=complex)
        z = complex(self.spectral_parameter)
        doc = {
            "label": self.label,
            "site": self.site,
            "z": [z.real, z.imag],
            "N": ent.shape[0],
            "entries": [[[v.real, v.imag] for v in row] for row in ent],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpectralMatrix":
        doc = json.loads(text)
        ent = np.array([[complex(*v) for v in row] for row in doc["entries"]])
        return cls(ent, complex(*doc["z"]), doc["label"], doc.get("site"))


def as_matrix(rows) -> np.ndarray:
    """Pack nested lists into a complex array, or an object array if duals are present."""
    n = len(rows)
    out = np.empty((n, len(rows[0])), dtype=object)
    has_dual = False
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            out[i, j] = v
            has_dual = has_dual or isinstance(v, dk.Dual)
    return out if has_dual else out.astype(complex)


def _vector(vals) -> np.ndarray:
    if any(isinstance(v, dk.Dual) for v in vals):
        out = np.empty(len(vals), dtype=object)
        out[:] = vals
        return out
    return np.array(vals, dtype=complex)


def matmul(a, b):
    if a.dtype == object or b.dtype == object:
        return np.dot(a, b)
    return a @ b


# ---------------------------------------------------------------------------
# Ruijsenaars-Schneider


def rs_b(state: RSState, params: ModelParams, variant: str = "standard") -> np.ndarray:
    """Weights ``b_j``; ``variant`` selects the canonically shifted forms."""
    if variant not in WEIGHT_VARIANTS:
        raise ValueError(f"unknown weight variant {variant!r}")
    m = params.modulus
    eta, c = params.eta, params.c
    q, p = state.q, state.p
    n = len(q)
    out = []
    for j in range(n):
        acc = 1.0
        for k in range(n):
            if k == j:
                continue
            d = q[j] - q[k]
            if variant == "standard":
                acc = acc * el.theta(d - eta, m) / el.theta(d, m)
            elif variant == "plus-eta":
                acc = acc * el.theta(d + eta, m) / el.theta(d, m)
            else:
                acc = acc * (el.theta(eta, m) / m.theta_prime0) * dk.sqrt(el.wp(eta, m) - el.wp(d, m))
        out.append(acc * dk.exp(p[j] / c))
    return _vector(out)


def rs_lax(state: RSState, z, params: ModelParams, variant: str = "standard") -> np.ndarray:
    """``L_ij(z) = phi(z, q_i - q_j + eta) b_j``."""
    m = params.modulus
    b = rs_b(state, params, variant)
    q = state.q
    n = len(q)
    return as_matrix(
        [[el.kronecker_phi(z, q[i] - q[j] + params.eta, m) * b[j] for j in range(n)] for i in range(n)]
    )


def rs_M(state: RSState, z, params: ModelParams, variant: str = "standard") -> np.ndarray:
    """Accompanying M-matrix, with ``qdot_j = b_j``."""
    m = params.modulus
    eta = params.eta
    qd = rs_b(state, params, variant)
    q = state.q
    n = len(q)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if i != j:
                row.append(-el.kronecker_phi(z, q[i] - q[j], m) * qd[j])
            else:
                acc = qd[i] * (el.e1(z, m) + el.e1(eta, m))
                for k in range(n):
                    if k != i:
                        acc = acc + qd[k] * (el.e1(q[i] - q[k] + eta, m) - el.e1(q[i] - q[k], m))
                row.append(-acc)
        rows.append(row)
    return as_matrix(rows)


def rs_hamiltonian(state: RSState, params: ModelParams, variant: str = "standard"):
    b = rs_b(state, params, variant)
    acc = 0.0
    for v in b:
        acc = acc + v
    return params.c * acc


def rs_eom(state: RSState, params: ModelParams, variant: str = "standard"):
    """``(qdot, pdot)``; closed form for the standard weights, Poisson engine otherwise."""
    if variant != "standard":
        gp, gq = dk.partials(lambda s: rs_hamiltonian(s, params, variant), state)
        return gp, -gq
    m = params.modulus
    eta, c = params.eta, params.c
    qd = rs_b(state, params)
    q = state.q
    n = len(q)
    pd = []
    for i in range(n):
        acc = 0.0
        for l in range(n):
            if l == i:
                continue
            d = q[i] - q[l]
            acc = acc + (qd[i] + qd[l]) * el.e1(d, m) - qd[i] * el.e1(d - eta, m) - qd[l] * el.e1(d + eta, m)
        pd.append(c * acc)
    return qd, _vector(pd)


def rs_newton_rhs(q, qdot, params: ModelParams) -> np.ndarray:
    """Right side of the second-order RS equations for given positions and velocities."""
    m = params.modulus
    eta = params.eta
    n = len(q)
    out = []
    for i in range(n):
        acc = 0.0
        for k in range(n):
            if k != i:
                d = q[i] - q[k]
                acc = acc + qdot[i] * qdot[k] * (2 * el.e1(d, m) - el.e1(d + eta, m) - el.e1(d - eta, m))
        out.append(acc)
    return np.array(out, dtype=complex)


def _second_derivative(velocity, state, qdot, pdot):
    """``d/dt velocity(state)`` along the flow ``(qdot, pdot)`` by the chain rule."""
    _, jp, jq = dk.jacobian(velocity, state)
    flat_p = np.ravel(np.asarray(pdot, dtype=complex))
    flat_q = np.ravel(np.asarray(qdot, dtype=complex))
    return jp @ flat_p + jq @ flat_q


def rs_newton_residual(state: RSState, params: ModelParams, variant: str = "standard") -> float:
    qd, pd = rs_eom(state, params, variant)
    qdd = _second_derivative(lambda s: rs_b(s, params, variant), state, qd, pd)
    return float(np.max(np.abs(qdd - rs_newton_rhs(state.q, qd, params))))


# ---------------------------------------------------------------------------
# Calogero-Moser


def cm_lax(state: RSState, z, params: ModelParams, tilde: bool = True) -> np.ndarray:
    """CM Lax matrix; with ``tilde`` the diagonal carries the shifted momenta."""
    m = params.modulus
    nu = params.nu
    pt = tilde_p(state, params) if tilde else state.p
    q = state.q
    n = len(q)
    ez = el.e1(z, m)
    return as_matrix(
        [
            [pt[i] + nu * ez if i == j else nu * el.kronecker_phi(z, q[i] - q[j], m) for j in range(n)]
            for i in range(n)
        ]
    )


def cm_M(state: RSState, z, params: ModelParams) -> np.ndarray:
    """M-matrix for the CM flow generated by :func:`cm_hamiltonian` (untilded momenta)."""
    m = params.modulus
    nu = params.nu
    q = state.q
    n = len(q)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if i != j:
                row.append(nu * el.phi_du(z, q[i] - q[j], m))
            else:
                acc = 0.0
                for k in range(n):
                    if k != i:
                        acc = acc + el.wp(q[i] - q[k], m)
                row.append(nu * acc)
        rows.append(row)
    return as_matrix(rows)


def cm_hamiltonian(state: RSState, params: ModelParams):
    m = params.modulus
    nu = params.nu
    q, p = state.q, state.p
    n = len(q)
    acc = 0.0
    for i in range(n):
        acc = acc + p[i] * p[i] / 2
        for j in range(i):
            acc = acc - nu * nu * el.wp(q[i] - q[j], m)
    return acc


def cm_eom(state: RSState, params: ModelParams):
    m = params.modulus
    nu = params.nu
    q = state.q
    n = len(q)
    pd = []
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j != i:
                acc = acc + el.wp_d(q[i] - q[j], m)
        pd.append(nu * nu * acc)
    return np.array(state.p, dtype=complex), np.array(pd, dtype=complex)


# ---------------------------------------------------------------------------
# Ruijsenaars chain


def chain_weights(state: ChainState, a: int, params: ModelParams) -> np.ndarray:
    """Site weights ``b^a_j``; ``sum_j b^a_j = h_{a-1,a}``."""
    m = params.modulus
    eta, c = params.eta, params.c
    qa, qp = state.qs(a), state.qs(a - 1)
    pa = state.ps(a)
    n = len(qa)
    th_eta = el.theta(-eta, m)
    out = []
    for j in range(n):
        num = 1.0
        for l in range(n):
            num = num * el.theta(qa[j] - qp[l] - eta, m)
        den = th_eta
        for l in range(n):
            if l != j:
                den = den * el.theta(qa[j] - qa[l], m)
        out.append(num / den * dk.exp(pa[j] / c))
    return _vector(out)


def chain_h(state: ChainState, a: int, params: ModelParams):
    acc = 0.0
    for v in chain_weights(state, a, params):
        acc = acc + v
    return acc


def chain_lax(state: ChainState, a: int, z, params: ModelParams) -> np.ndarray:
    m = params.modulus
    b = chain_weights(state, a, params)
    qa, qp = state.qs(a), state.qs(a - 1)
    n = len(qa)
    return as_matrix(
        [[el.kronecker_phi(z, qp[i] - qa[j] + params.eta, m) * b[j] for j in range(n)] for i in range(n)]
    )


def chain_monodromy(state: ChainState, z, params: ModelParams) -> np.ndarray:
    """``T(z) = L^1(z) L^2(z) ... L^n(z)``."""
    t = chain_lax(state, 1, z, params)
    for a in range(2, state.n + 1):
        t = matmul(t, chain_lax(state, a, z, params))
    return t


def chain_hamiltonian(state: ChainState, params: ModelParams, floor: float = 1e-12):
    acc = 0.0
    for a in range(1, state.n + 1):
        h = chain_h(state, a, params)
        if abs(dk.base_value(h)) < floor:
            raise DegenerateWeightError(f"h at site {a} vanishes: {dk.base_value(h)!r}")
        acc = acc + dk.log(h)
    return params.c * acc


def chain_velocity(state: ChainState, params: ModelParams) -> np.ndarray:
    """Closed-form ``qdot^a_j = b^a_j / h_{a-1,a}``."""
    rows = []
    for a in range(1, state.n + 1):
        b = chain_weights(state, a, params)
        h = chain_h(state, a, params)
        rows.append([v / h for v in b])
    return as_matrix(rows)


def chain_eom(state: ChainState, params: ModelParams):
    """``(qdot, pdot)`` from the Poisson engine applied to the closed-form Hamiltonian."""
    gp, gq = dk.partials(lambda s: chain_hamiltonian(s, params), state)
    return gp, -gq


def chain_newton_rhs(state: ChainState, qdot, params: ModelParams) -> np.ndarray:
    """Right side of the chain Newtonian equations, i.e. the predicted ``qddot / qdot``."""
    m = params.modulus
    eta = params.eta
    n, N = state.n, state.N
    qdot = np.asarray(qdot, dtype=complex)

    def qs(a):
        return state.qs(a)

    def vs(a):
        return qdot[(a - 1) % n]

    out = np.zeros((n, N), dtype=complex)
    for a in range(1, n + 1):
        qa, qn, qp = qs(a), qs(a + 1), qs(a - 1)
        va, vn, vp = vs(a), vs(a + 1), vs(a - 1)
        cross = 0.0
        for mm in range(N):
            for l in range(N):
                cross += va[mm] * vn[l] * el.e1(qa[mm] - qn[l] + eta, m)
                cross -= va[l] * vp[mm] * el.e1(qp[mm] - qa[l] + eta, m)
        for i in range(N):
            acc = cross
            for l in range(N):
                acc -= vn[l] * el.e1(qa[i] - qn[l] + eta, m)
                acc -= vp[l] * el.e1(qa[i] - qp[l] - eta, m)
                if l != i:
                    acc += 2 * va[l] * el.e1(qa[i] - qa[l], m)
            out[a - 1, i] = acc
    return out


def chain_newton_residual(state: ChainState, params: ModelParams) -> float:
    qd, pd = chain_eom(state, params)
    qdd = _second_derivative(lambda s: chain_velocity(s, params), state, qd, pd).reshape(qd.shape)
    lhs = qdd / qd
    return float(np.max(np.abs(lhs - chain_newton_rhs(state, qd, params))))


# ---------------------------------------------------------------------------
# residues at z = 0


def pole_distance(shifts, params: ModelParams) -> float:
    """Distance from 0 to the nearest pole locus ``-shift + lattice`` other than 0 itself."""
    m = params.modulus
    best = 1.0
    for s in shifts:
        d = el.lattice_distance(s, m)
        if d > 1e-9:
            best = min(best, d)
    return best


def chain_pole_shifts(state: ChainState, params: ModelParams) -> list:
    out = []
    for a in range(1, state.n + 1):
        qa, qp = state.qs(a), state.qs(a - 1)
        for i in range(state.N):
            for j in range(state.N):
                out.append(complex(qp[i] - qa[j] + params.eta))
    return out


def residue_radius(shifts, params: ModelParams, cap: float = 0.05) -> float:
    return min(cap, 0.25 * pole_distance(shifts, params))


def rs_lax_residue(state: RSState, params: ModelParams, variant: str = "standard", K: int = 32):
    shifts = [complex(state.q[i] - state.q[j] + params.eta) for i in range(state.N) for j in range(state.N)]
    rho = residue_radius(shifts, params)
    return laurent_coeffs(lambda z: rs_lax(state, z, params, variant), rho, K, [-1])[-1]


def chain_hamiltonian_residue(state: ChainState, params: ModelParams, K: int = 32) -> complex:
    """``Res_{z=0} z^{n-1} tr T(z)``, which equals ``exp(H/c)``."""
    rho = residue_radius(chain_pole_shifts(state, params), params)
    n = state.n
    fn = lambda z: z ** (n - 1) * np.trace(chain_monodromy(state, z, params))  # noqa: E731
    return complex(laurent_coeffs(fn, rho, K, [-1])[-1])
