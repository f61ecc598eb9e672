"""Non-relativistic limits certified by contour Laurent extraction.

Two conventions are in play and every report records which one it used:

* ``"mechanics"``: ``eps = 1/c`` and ``eta = eps nu``; the RS Lax matrix tends to
  ``1/(eps nu) + L^CM/nu``.
* ``"field"``: ``eps = -1/c`` and ``eta_rel = -nu eps``; the field U-matrix tends
  to ``-1/(nu eps) + U^CM/nu`` at ``k = 1``.

Real-eps Richardson extrapolation is kept as a secondary route
(:func:`richardson_c0`).
"""

from __future__ import annotations

import numpy as np

from rslab import diffkit as dk
from rslab import elliptic as el
from rslab import fieldkit as fk
from rslab import laxmodels as lm
from rslab import rmatrices as rm
from rslab import tensor as tn
from rslab.contour import LaurentWindow, laurent_coeffs
from rslab.states import ModelParams, RSState, tilde_p
from rslab.verify import ResidualReport, _mag, contour_params, field_at, make_report

__all__ = [
    "LaurentWindow",
    "laurent_coeffs",
    "mechanics_params",
    "richardson_c0",
    "two_radius_gap",
    "verify_rs_to_cm_lax",
    "verify_residue_s_terms",
    "verify_rs_to_cm_bracket",
    "verify_field_U_limit",
    "coefficient_table",
]

DEFAULT_TOL = 1e-7


def mechanics_params(params: ModelParams, eps) -> ModelParams:
    """``eta = eps nu`` and ``c = 1/eps``, with the contour guard."""
    return contour_params(params).replace(eta=eps * params.nu, c=1.0 / eps)


def two_radius_gap(fn, window: LaurentWindow, certified) -> float:
    """Largest relative change of the certified orders between radii ``rho`` and ``rho/2``."""
    a = window.coeffs(fn)
    b = window.halved().coeffs(fn)
    gap = 0.0
    for o in certified:
        gap = max(gap, float(np.max(np.abs(a[o] - b[o]))) / max(1.0, float(np.max(np.abs(a[o])))))
    return gap


def richardson_c0(fn, eps: float = 1e-3, pole: int = 1, levels: int = 4):
    """``eps^0`` coefficient of ``fn`` from real samples at ``eps / 2^k``.

    ``eps^pole fn(eps)`` is fitted by a polynomial of degree ``levels - 1``.
    """
    es = eps / 2.0 ** np.arange(levels)
    ys = np.array([np.asarray(fn(e), dtype=complex) * e ** pole for e in es])
    vand = np.vander(es, levels, increasing=True)
    fit = np.linalg.solve(vand, ys.reshape(levels, -1)).reshape(ys.shape)
    return fit[pole]


def _singular_max(co: dict, below: int) -> float:
    return max((float(np.max(np.abs(v))) for o, v in co.items() if o < below), default=0.0)


# ---------------------------------------------------------------------------
# finite-dimensional RS -> CM


def verify_rs_to_cm_lax(state: RSState, z, params: ModelParams, window: LaurentWindow | None = None,
                        tol: float = DEFAULT_TOL, seed=None) -> ResidualReport:
    window = window or LaurentWindow()
    nu = params.nu
    fn = lambda e: lm.rs_lax(state, z, mechanics_params(params, e))  # noqa: E731
    co = window.coeffs(fn)
    n = len(state.q)
    target_m1 = np.eye(n) / nu
    target_0 = np.asarray(lm.cm_lax(state, z, params), dtype=complex) / nu
    res = max(float(np.max(np.abs(co[-1] - target_m1))), float(np.max(np.abs(co[0] - target_0))))
    # the Kronecker factor and the weights on their own
    m = contour_params(params).modulus
    phi_co = window.coeffs(lambda e: np.array(
        [[el.kronecker_phi(z, state.q[i] - state.q[j] + e * nu, m) for j in range(n)] for i in range(n)]))
    phi_0 = np.array([[el.e1(z, m) if i == j else el.kronecker_phi(z, state.q[i] - state.q[j], m)
                       for j in range(n)] for i in range(n)])
    b_co = window.coeffs(lambda e: lm.rs_b(state, mechanics_params(params, e)))
    details = {
        "convention": "mechanics",
        "window": window.to_json(),
        "below_pole": _singular_max(co, -1),
        "phi_expansion": max(float(np.max(np.abs(phi_co[-1] - np.eye(n) / nu))),
                             float(np.max(np.abs(phi_co[0] - phi_0)))),
        "weight_expansion": max(float(np.max(np.abs(b_co[0] - 1))),
                                float(np.max(np.abs(b_co[1] - tilde_p(state, params))))),
        "two_radius": two_radius_gap(fn, window, (-1, 0)),
    }
    return make_report("limit-rs2cm-lax", "RS to CM limit of the Lax matrix", params, seed, [(z, z)], res,
                       _mag(target_m1, target_0), tol, **details)


def _eta_window(window: LaurentWindow, params: ModelParams) -> LaurentWindow:
    return LaurentWindow(window.rho * abs(params.nu), window.K, window.orders)


def verify_residue_s_terms(state: RSState, z, w, params: ModelParams, window: LaurentWindow | None = None,
                           tol: float = DEFAULT_TOL, seed=None) -> ResidualReport:
    """Residues at ``eta = 0`` of ``L_2 s^-_12`` and ``L_1 s^+_12`` against their closed forms."""
    window = _eta_window(window or LaurentWindow(), params)
    nu = params.nu

    def both(eta):
        pr = rm.rs_products(state, z, w, mechanics_params(params, eta / nu))
        return np.stack([pr["L2s_minus"], pr["L1s_plus"]])

    co = window.coeffs(both)
    closed_minus, closed_plus = rm.cm_residue_closed(state, z, w, params)
    res = max(tn.norm(co[-1][0] - closed_minus), tn.norm(co[-1][1] - closed_plus))
    details = {"convention": "mechanics", "variable": "eta", "window": window.to_json(),
               "below_pole": _singular_max(co, -1)}
    return make_report("limit-residues", "eta residues of the s-terms", params, seed, [(z, w)], res,
                       _mag(closed_minus, closed_plus), tol, **details)


def rs_bracket_sides(state: RSState, z, w, params: ModelParams) -> dict:
    """``c {L_1, L_2}`` by AD and the commutator right side, at the given ``params``."""
    lhs = params.c * dk.matrix_poisson_bracket(lambda s: lm.rs_lax(s, z, params),
                                               lambda s: lm.rs_lax(s, w, params), state)
    pr = rm.rs_products(state, z, w, params)
    l1, l2, r = pr["L1"], pr["L2"], pr["r"]
    rhs = (l1 @ l2 @ r - r @ l1 @ l2) + (l1 @ pr["L2s_minus"] - pr["L2s_minus"] @ l1) - (
        l2 @ pr["L1s_plus"] - pr["L1s_plus"] @ l2)
    return {"lhs": lhs, "rhs": rhs}


def verify_rs_to_cm_bracket(state: RSState, z, w, params: ModelParams, window: LaurentWindow | None = None,
                            tol: float = 1e-6, seed=None) -> ResidualReport:
    """The eps^-1 coefficients of both sides equal the CM linear structure over ``nu^2``."""
    window = window or LaurentWindow(orders=(-3, 1))
    nu = params.nu

    def sides(e):
        mp = mechanics_params(params, e)
        s = rs_bracket_sides(state, z, w, mp)
        l1 = tn.one(lm.rs_lax(state, z, mp))
        l2 = tn.two(lm.rs_lax(state, w, mp))
        r = rm.r_matrix(state.q, z, w, mp)
        return np.stack([s["lhs"], s["rhs"], l1 @ l2 @ r - r @ l1 @ l2])

    co = window.coeffs(sides)
    cm_lhs = dk.matrix_poisson_bracket(lambda s: lm.cm_lax(s, z, params), lambda s: lm.cm_lax(s, w, params), state)
    l1 = tn.one(lm.cm_lax(state, z, params))
    l2 = tn.two(lm.cm_lax(state, w, params))
    r_cm12 = rm.cm_r12(state, z, w, params)
    r_cm21 = tn.swap(rm.cm_r12(state, w, z, params))
    cm_linear = (l1 @ r_cm12 - r_cm12 @ l1) - (l2 @ r_cm21 - r_cm21 @ l2)
    res = max(tn.norm(nu ** 2 * co[-1][0] - cm_lhs), tn.norm(nu ** 2 * co[-1][1] - cm_linear))
    scale = _mag(cm_lhs, l1 @ r_cm12)
    below = {str(o): max(tn.norm(co[o][0]), tn.norm(co[o][1])) / max(1.0, scale / abs(nu) ** 2)
             for o in co if o < -1}
    # the r-part alone: [L1 L2, r] -> ([L1, r12] - [L2, r21]) / (eps nu^2) through r12(z,w) = -r21(w,z)
    r12 = rm.r_matrix(state.q, z, w, params)
    r21 = tn.swap(rm.r_matrix(state.q, w, z, params))
    r_split = (l1 @ r12 - r12 @ l1) - (l2 @ r21 - r21 @ l2)
    details = {
        "convention": "mechanics",
        "window": window.to_json(),
        "below_pole_scaled": below,
        "skew_r": tn.norm(r12 + r21),
        "r_part_split": tn.norm(nu ** 2 * co[-1][2] - r_split) / max(1.0, scale),
        "vs_cm_linear": tn.norm(cm_linear - cm_lhs) / max(1.0, scale),
    }
    return make_report("limit-rs2cm-bracket", "RS to CM limit of the quadratic structure", params, seed,
                       [(z, w)], res, scale, tol, **details)


# ---------------------------------------------------------------------------
# field theory


def verify_field_U_limit(fp: fk.FieldPoint, z, params: ModelParams, window: LaurentWindow | None = None,
                         tol: float = DEFAULT_TOL, seed=None) -> ResidualReport:
    window = window or LaurentWindow()
    cp = contour_params(params)
    nu = params.nu
    n = fp.N
    fn = lambda e: nu * np.asarray(fk.rs_field_U(field_at(fp, e), z, cp), dtype=complex)  # noqa: E731
    co = window.coeffs(fn)
    target = np.asarray(fk.cm_limit_U(fp, z, params), dtype=complex)
    res = max(float(np.max(np.abs(co[-1] + np.eye(n)))), float(np.max(np.abs(co[0] - target))))

    # weight factor without the exponential: (A_j/nu)(1 + eps sum_{a != j} A_a E1(q_j - q_a))
    m = params.modulus
    A = fk.limit_alpha2(fp, params)
    q = fp.qs(0)

    def factor(e):
        f = field_at(fp, e)
        b = fk.rs_field_weights(f, cp)
        return np.array([b[j] * dk.exp(e * f.ps(0)[j]) for j in range(n)], dtype=complex)

    fco = window.coeffs(factor)
    lin = np.array([A[j] / nu * sum(A[a] * el.e1(q[j] - q[a], m) for a in range(n) if a != j) for j in range(n)])
    # the q_xx term comes from theta(q_j(x) - q_j(x - eps) + nu eps) at second order in eps
    qxx = np.array([fp.qs(0, 2)[j] for j in range(n)], dtype=complex)
    lead = float(np.max(np.abs(fco[0] - np.array(A) / nu)))
    details = {
        "convention": "field",
        "window": window.to_json(),
        "below_pole": _singular_max(co, -1),
        "weight_expansion_displayed": max(lead, float(np.max(np.abs(fco[1] - lin)))),
        "weight_expansion_with_qxx": max(lead, float(np.max(np.abs(fco[1] - lin + qxx / (2 * nu))))),
        "two_radius": two_radius_gap(fn, window, (-1, 0)),
    }
    return make_report("limit-field-U", "field U-matrix in the CM limit", params, seed, [(z, z)], res,
                       _mag(target), tol, **details)


def coefficient_table(co: dict) -> list:
    """Long-format rows ``(order, index, re, im)`` for JSON or CSV export."""
    rows = []
    for o in sorted(co):
        arr = np.asarray(co[o], dtype=complex)
        for idx in np.ndindex(arr.shape):
            rows.append({"order": int(o), "index": list(idx), "re": float(arr[idx].real), "im": float(arr[idx].imag)})
    return rows
