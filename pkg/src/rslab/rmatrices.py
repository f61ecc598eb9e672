"""Tensor building blocks of the quadratic and linear r-matrix structures.

Every tensor is an ``(N^2, N^2)`` operator in the layout of :mod:`rslab.tensor`.
Products such as ``L_1 s_12`` are built in closed form so that the bracket
identities can be assembled without inverting a Lax matrix; the inverted
forms of ``s_12`` are provided separately as cross-checks.
"""

from __future__ import annotations

import numpy as np

from rslab import elliptic as el
from rslab import laxmodels as lm
from rslab import tensor as tn
from rslab.states import ChainState, ModelParams, RSState

COND_LIMIT = 1e8


class CoincidingSpectralError(ValueError):
    pass


class InversionRefusedError(ValueError):
    pass


def _coeffs(n: int) -> np.ndarray:
    return np.zeros((n, n, n, n), dtype=complex)


def _check_distinct(z, w, params: ModelParams) -> None:
    if el.lattice_distance(z - w, params.modulus) < max(params.guard, 1e-12):
        raise CoincidingSpectralError(f"z={z} and w={w} coincide modulo the lattice")


def safe_inverse(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise InversionRefusedError(f"condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    return np.linalg.inv(a)


# ---------------------------------------------------------------------------
# generic builders shared by RS, chain and field


def r_matrix(q, z, w, params: ModelParams, sign: int = -1) -> np.ndarray:
    """``sum phi(z-w, q_ij) E_ij(x)E_ji + E1(z-w) sum E_ii(x)E_ii + sign sum E1(q_ij) E_ii(x)E_jj``."""
    _check_distinct(z, w, params)
    m = params.modulus
    n = len(q)
    c = _coeffs(n)
    ezw = el.e1(z - w, m)
    for i in range(n):
        c[i, i, i, i] = ezw
        for j in range(n):
            if i != j:
                c[i, j, j, i] = el.kronecker_phi(z - w, q[i] - q[j], m)
                c[i, i, j, j] = sign * el.e1(q[i] - q[j], m)
    return tn.from_coeffs(c)


def diag_pairs(values: np.ndarray) -> np.ndarray:
    """``sum_{ij} values[i, j] E_ii (x) E_jj``."""
    n = values.shape[0]
    c = _coeffs(n)
    for i in range(n):
        for j in range(n):
            c[i, i, j, j] = values[i, j]
    return tn.from_coeffs(c)


def _shift_table(q_prev, q_cur, shift, params: ModelParams) -> np.ndarray:
    """``E1(q_prev[i] - q_cur[j] + shift)``."""
    m = params.modulus
    n = len(q_cur)
    return np.array([[el.e1(q_prev[i] - q_cur[j] + shift, m) for j in range(n)] for i in range(n)])


def eta_derivative(lax: np.ndarray, q_prev, q_cur, z, shift, params: ModelParams) -> np.ndarray:
    """Quoted eta-derivative ``L_ij (E1(z + d_ij) - E1(d_ij))``, ``d_ij = q_prev[i] - q_cur[j] + shift``."""
    m = params.modulus
    n = len(q_cur)
    out = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            d = q_prev[i] - q_cur[j] + shift
            out[i, j] = lax[i, j] * (el.e1(z + d, m) - el.e1(d, m))
    return out


def left_s(dl: np.ndarray) -> np.ndarray:
    """``sum dl_ij E_ij (x) E_ii`` (the closed form of ``L_1 s_12``)."""
    n = dl.shape[0]
    c = _coeffs(n)
    for i in range(n):
        for j in range(n):
            c[i, j, i, i] = dl[i, j]
    return tn.from_coeffs(c)


def right_s(dl: np.ndarray) -> np.ndarray:
    """``sum dl_ij E_ii (x) E_ij`` (the closed form of ``L_2 s_21``)."""
    n = dl.shape[0]
    c = _coeffs(n)
    for i in range(n):
        for j in range(n):
            c[i, i, i, j] = dl[i, j]
    return tn.from_coeffs(c)


def s_from_inverse(lax: np.ndarray, dl: np.ndarray, slot: int = 1) -> np.ndarray:
    """``s_12 = sum (L^{-1})_mi dl_ij E_mj (x) E_ii``; ``slot=2`` gives the swapped ``s_21``."""
    inv = safe_inverse(lax)
    n = lax.shape[0]
    c = _coeffs(n)
    for mm in range(n):
        for i in range(n):
            for j in range(n):
                v = inv[mm, i] * dl[i, j]
                if slot == 1:
                    c[mm, j, i, i] += v
                else:
                    c[i, i, mm, j] += v
    return tn.from_coeffs(c)


# ---------------------------------------------------------------------------
# Ruijsenaars-Schneider


def rs_r12(state: RSState, z, w, params: ModelParams) -> np.ndarray:
    return r_matrix(state.q, z, w, params, sign=-1)


def rs_u_pm(state: RSState, params: ModelParams):
    """``u^{+-} = sum E1(q_ji +- eta) E_ii (x) E_jj``."""
    m = params.modulus
    q, eta = state.q, params.eta
    n = len(q)
    up = np.array([[el.e1(q[j] - q[i] + eta, m) for j in range(n)] for i in range(n)])
    um = np.array([[el.e1(q[j] - q[i] - eta, m) for j in range(n)] for i in range(n)])
    return diag_pairs(up), diag_pairs(um)


def rs_dlax(state: RSState, z, params: ModelParams, variant: str = "standard") -> np.ndarray:
    lax = lm.rs_lax(state, z, params, variant)
    return eta_derivative(lax, state.q, state.q, z, params.eta, params)


def rs_L1s12(state: RSState, z, params: ModelParams, variant: str = "standard") -> np.ndarray:
    return left_s(rs_dlax(state, z, params, variant))


def rs_L2s21(state: RSState, w, params: ModelParams, variant: str = "standard") -> np.ndarray:
    return right_s(rs_dlax(state, w, params, variant))


def rs_s12(state: RSState, z, params: ModelParams, variant: str = "standard") -> np.ndarray:
    lax = lm.rs_lax(state, z, params, variant)
    return s_from_inverse(lax, rs_dlax(state, z, params, variant), slot=1)


def rs_s21(state: RSState, w, params: ModelParams, variant: str = "standard") -> np.ndarray:
    lax = lm.rs_lax(state, w, params, variant)
    return s_from_inverse(lax, rs_dlax(state, w, params, variant), slot=2)


def rs_assembled(state: RSState, z, w, params: ModelParams, variant: str = "standard") -> dict:
    """``r^+, r^-, s^+, s^-`` of the quadratic structure (uses ``L^{-1}``)."""
    r = rs_r12(state, z, w, params)
    up, um = rs_u_pm(state, params)
    sp = rs_s12(state, z, params, variant) + up
    sm = rs_s21(state, w, params, variant) - um
    return {"r_plus": r, "r_minus": r - sp + sm, "s_plus": sp, "s_minus": sm}


def rs_products(state: RSState, z, w, params: ModelParams, variant: str = "standard") -> dict:
    """Closed-form ``L_1 s^+_12`` and ``L_2 s^-_12`` together with ``L_1``, ``L_2`` and ``r``."""
    lz = lm.rs_lax(state, z, params, variant)
    lw = lm.rs_lax(state, w, params, variant)
    up, um = rs_u_pm(state, params)
    l1, l2 = tn.one(lz), tn.two(lw)
    return {
        "L1": l1,
        "L2": l2,
        "r": rs_r12(state, z, w, params),
        "L1s_plus": left_s(eta_derivative(lz, state.q, state.q, z, params.eta, params)) + l1 @ up,
        "L2s_minus": right_s(eta_derivative(lw, state.q, state.q, w, params.eta, params)) - l2 @ um,
    }


# ---------------------------------------------------------------------------
# Calogero-Moser


def cm_r12(state: RSState, z, w, params: ModelParams) -> np.ndarray:
    _check_distinct(z, w, params)
    m = params.modulus
    q = state.q
    n = len(q)
    c = _coeffs(n)
    d = el.e1(z - w, m) + el.e1(w, m)
    for i in range(n):
        c[i, i, i, i] = d
        for j in range(n):
            if i != j:
                c[i, j, j, i] = el.kronecker_phi(z - w, q[i] - q[j], m)
                c[i, i, j, i] = -el.kronecker_phi(-w, q[i] - q[j], m)
    return tn.from_coeffs(c)


def cm_residue_closed(state: RSState, z, w, params: ModelParams) -> tuple:
    """Closed forms of ``Res_{eta=0}`` of ``L_2 s^-_12`` and ``L_1 s^+_12``."""
    m = params.modulus
    q = state.q
    n = len(q)
    lz = lm.cm_lax(state, z, params)
    lw = lm.cm_lax(state, w, params)
    cm_, cp = _coeffs(n), _coeffs(n)
    for i in range(n):
        cm_[i, i, i, i] = el.e1(w, m)
        cp[i, i, i, i] = el.e1(z, m)
        for j in range(n):
            if i != j:
                e = el.e1(q[i] - q[j], m)
                cm_[i, i, j, j] += e
                cm_[j, j, i, j] += lw[i, j] / params.nu
                cp[j, j, i, i] += e
                cp[i, j, j, j] += lz[i, j] / params.nu
    return tn.from_coeffs(cm_), tn.from_coeffs(cp)


# ---------------------------------------------------------------------------
# Ruijsenaars chain


def chain_dlax(state: ChainState, a: int, z, params: ModelParams) -> np.ndarray:
    lax = lm.chain_lax(state, a, z, params)
    return eta_derivative(lax, state.qs(a - 1), state.qs(a), z, params.eta, params)


def chain_u_pm(state: ChainState, a: int, params: ModelParams):
    """``u^{+,a}`` and ``u^{-,a}``, the latter with its overall minus sign."""
    qp, qa = state.qs(a - 1), state.qs(a)
    eta = params.eta
    up = _shift_table(qp, qa, eta, params).T  # [i, j] -> E1(q^{a-1}_j - q^a_i + eta)
    um = -_shift_table(qp, qa, eta, params)
    return diag_pairs(up), diag_pairs(um)


def chain_tensors(state: ChainState, a: int, z, w, params: ModelParams, with_inverse: bool = False) -> dict:
    lz = lm.chain_lax(state, a, z, params)
    lw = lm.chain_lax(state, a, w, params)
    up, um = chain_u_pm(state, a, params)
    l1s = left_s(chain_dlax(state, a, z, params))
    l2s = right_s(chain_dlax(state, a, w, params))
    out = {
        "r": r_matrix(state.qs(a), z, w, params),
        "u_plus": up,
        "u_minus": um,
        "L1s12": l1s,
        "L2s21": l2s,
        "L1s_plus": l1s + tn.one(lz) @ up,
        "L2s_minus": l2s - tn.two(lw) @ um,
        "L1": tn.one(lz),
        "L2": tn.two(lw),
    }
    if with_inverse:
        s12 = s_from_inverse(lz, chain_dlax(state, a, z, params), slot=1)
        s21 = s_from_inverse(lw, chain_dlax(state, a, w, params), slot=2)
        out["s_plus"] = s12 + up
        out["s_minus"] = s21 - um
    return out


def monodromy_breve(state: ChainState, z, w, params: ModelParams) -> dict:
    """Conjugated ``s^{+-,1}`` of the monodromy structure, two independent ways."""
    t = chain_tensors(state, 1, z, w, params)
    l1z = lm.chain_lax(state, 1, z, params)
    l1w = lm.chain_lax(state, 1, w, params)
    inv_z = safe_inverse(l1z)
    inv_w = safe_inverse(l1w)
    sp = t["L1s_plus"] @ tn.one(inv_z)
    sm = t["L2s_minus"] @ tn.two(inv_w)

    # entrywise formulas for the conjugated pieces
    n = state.N
    dz = chain_dlax(state, 1, z, params) @ inv_z
    dw = chain_dlax(state, 1, w, params) @ inv_w
    qn, q1 = state.qs(0), state.qs(1)
    e = _shift_table(qn, q1, params.eta, params)  # e[i, j] = E1(q^n_i - q^1_j + eta)
    cu_p, cu_m = _coeffs(n), _coeffs(n)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    cu_p[k, l, j, j] += l1z[k, i] * inv_z[i, l] * e[j, i]
                    cu_m[i, i, k, l] -= l1w[k, j] * inv_w[j, l] * e[i, j]
    breve_s12 = left_s(dz)
    breve_s21 = right_s(dw)
    return {
        "s_plus": sp,
        "s_minus": sm,
        "s_plus_formula": breve_s12 + tn.from_coeffs(cu_p),
        "s_minus_formula": breve_s21 - tn.from_coeffs(cu_m),
        "breve_s12": breve_s12,
        "breve_s21": breve_s21,
    }


# ---------------------------------------------------------------------------
# gauge-variant Lax matrix with the weight on the row index


def appb_lax(state: RSState, z, params: ModelParams, variant: str = "standard") -> np.ndarray:
    m = params.modulus
    b = lm.rs_b(state, params, variant)
    q = state.q
    n = len(q)
    return lm.as_matrix(
        [[b[i] * el.kronecker_phi(z, q[i] - q[j] + params.eta, m) for j in range(n)] for i in range(n)]
    )


def appb_tensors(state: RSState, z, w, params: ModelParams, variant: str = "standard",
                 rplus_base: str = "tilde") -> dict:
    """``a, b, c, d`` tensors for the gauge-variant Lax matrix.

    ``rplus_base`` chooses the r-matrix inside ``tilde r^+``: ``"tilde"`` (plus sign
    on the ``E1(q_ij)`` term) or ``"plain"`` (the untilded ``r_12``).
    """
    lz = appb_lax(state, z, params, variant)
    lw = appb_lax(state, w, params, variant)
    q = state.q
    dz = eta_derivative(lz, q, q, z, params.eta, params)
    dw = eta_derivative(lw, q, q, w, params.eta, params)
    inv_z = safe_inverse(lz)
    inv_w = safe_inverse(lw)
    n = len(q)
    gz = inv_z @ dz
    gw = inv_w @ dw
    c12, c21 = _coeffs(n), _coeffs(n)
    for i in range(n):
        for j in range(n):
            c12[i, j, j, j] = gz[i, j]
            c21[j, j, i, j] = gw[i, j]
    s12 = tn.from_coeffs(c12)
    s21 = tn.from_coeffs(c21)
    up, um = rs_u_pm(state, params)
    rt = r_matrix(q, z, w, params, sign=+1)
    base = rt if rplus_base == "tilde" else r_matrix(q, z, w, params, sign=-1)
    r_plus = base + up + um
    r_minus = rt - s12 + s21
    s_plus = s12 + up
    s_minus = s21 - um
    return {
        "L1": tn.one(lz),
        "L2": tn.two(lw),
        "a": -r_plus,
        "b": s_plus,
        "c": s_minus,
        "d": -r_minus,
        "s12": s12,
        "s21": s21,
        "L1s12_closed": _appb_left(dz),
        "L2s21_closed": _appb_right(dw),
    }


def _appb_left(dl: np.ndarray) -> np.ndarray:
    """``sum dl_ij E_ij (x) E_jj``."""
    n = dl.shape[0]
    c = _coeffs(n)
    for i in range(n):
        for j in range(n):
            c[i, j, j, j] = dl[i, j]
    return tn.from_coeffs(c)


def _appb_right(dl: np.ndarray) -> np.ndarray:
    """``sum dl_ij E_jj (x) E_ij``."""
    n = dl.shape[0]
    c = _coeffs(n)
    for i in range(n):
        for j in range(n):
            c[j, j, i, j] = dl[i, j]
    return tn.from_coeffs(c)


# ---------------------------------------------------------------------------
# field theory tensors at a point x with lattice shift eps


def field_tensors(q_x, q_xm, u_z, u_w, z, w, eps, params: ModelParams,
                  q_xmm=None, minus_sign: int = +1) -> dict:
    """Bold tensors at ``x``: ``q_x = q(x)``, ``q_xm = q(x - eps)``, ``u_z = U(z, x)``.

    ``minus_sign`` is the sign in front of ``u^-`` when assembling ``s^-``: ``+1``
    is the field convention ``s^- = s_21 + u^-``; ``-1`` uses the literal chain
    sign pattern with the field ``u^-``.  ``q_xmm = q(x - 2 eps)`` is needed
    only for ``r(z - w | x - eps)``.
    """
    shift = -params.nu * eps
    t = _shift_table(q_xm, q_x, shift, params)  # t[i, j] = E1(q_i(x-eps) - q_j(x) - nu eps)
    up = diag_pairs(t.T)
    um = diag_pairs(t)
    dz = eta_derivative(u_z, q_xm, q_x, z, shift, params)
    dw = eta_derivative(u_w, q_xm, q_x, w, shift, params)
    l1, l2 = tn.one(u_z), tn.two(u_w)
    out = {
        "r": r_matrix(q_x, z, w, params),
        "u_plus": up,
        "u_minus": um,
        "U1": l1,
        "U2": l2,
        "U1s_plus": left_s(dz) + l1 @ up,
        "U2s_minus": right_s(dw) + minus_sign * (l2 @ um),
    }
    if q_xmm is not None:
        out["r_shifted"] = r_matrix(q_xm, z, w, params)
    return out
