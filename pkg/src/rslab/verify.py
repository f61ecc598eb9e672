"""Residual evaluators for the bracket identities.

Each check puts the left side, computed by the Poisson engine, next to the right
side assembled from :mod:`rslab.rmatrices`, and returns a
:class:`ResidualReport`.  A report passes when
``residual_max <= tolerance * max(1, residual_scale)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from rslab import diffkit as dk
from rslab import elliptic as el
from rslab import fieldkit as fk
from rslab import laxmodels as lm
from rslab import rmatrices as rm
from rslab import tensor as tn
from rslab.contour import LaurentWindow
from rslab.states import ChainState, ModelParams, RSState, sample_spectral

DEFAULT_TOL = 1e-8


def _pair(v: complex) -> list:
    v = complex(v)
    return [float(v.real), float(v.imag)]


def _mag(*ops) -> float:
    return max((float(np.max(np.abs(np.asarray(o, dtype=complex)))) for o in ops), default=0.0)


@dataclass
class ResidualReport:
    check_id: str
    anchor: str
    params: dict
    seed: int | None
    spectral_points: list
    residual_max: float
    residual_scale: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.residual_max <= self.tolerance * max(1.0, self.residual_scale))

    @property
    def scaled(self) -> float:
        return self.residual_max / max(1.0, self.residual_scale)

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "anchor": self.anchor,
            "params": self.params,
            "seed": self.seed,
            "spectral_points": self.spectral_points,
            "residual_max": self.residual_max,
            "residuals": [self.residual_max],
            "residual_scale": self.residual_scale,
            "tolerance": self.tolerance,
            "details": self.details,
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def make_report(check_id, anchor, params: ModelParams, seed, points, residual, scale, tol, **details):
    return ResidualReport(
        check_id=check_id,
        anchor=anchor,
        params=params.to_json(),
        seed=seed,
        spectral_points=[[_pair(z), _pair(w)] for z, w in points],
        residual_max=float(residual),
        residual_scale=float(scale),
        tolerance=float(tol),
        details={k: _jsonable(v) for k, v in details.items()},
    )


def _jsonable(v):
    if isinstance(v, (bool, int, str)) or v is None:
        return v
    if isinstance(v, float):
        return v
    if isinstance(v, complex):
        return _pair(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return str(v)


def merge_reports(reports: list, check_id: str | None = None) -> ResidualReport:
    """Worst case over a batch; the worst report's details are kept."""
    if not reports:
        raise ValueError("no reports to merge")
    worst = max(reports, key=lambda r: r.scaled)
    pts = []
    for r in reports:
        for p in r.spectral_points:
            if p not in pts:
                pts.append(p)
    return ResidualReport(
        check_id=check_id or worst.check_id,
        anchor=worst.anchor,
        params=worst.params,
        seed=worst.seed,
        spectral_points=pts,
        residual_max=worst.residual_max,
        residual_scale=worst.residual_scale,
        tolerance=worst.tolerance,
        details=dict(worst.details, count=len(reports), all_pass=all(r.passed for r in reports)),
    )


def reports_to_json(reports: list) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=1)


def reports_to_csv(reports: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check_id", "seed", "residual_max", "residual_scale", "pass"])
    for r in reports:
        w.writerow([r.check_id, r.seed, repr(r.residual_max), repr(r.residual_scale), r.passed])
    return buf.getvalue()


def spectral_grid(rng, params: ModelParams, size: int = 3, avoid=(), guard: float = 0.05) -> list:
    """``size x size`` guarded (z, w) pairs; z and w never coincide modulo the lattice."""
    pts = sample_spectral(rng, params, 2 * size, avoid=avoid, guard=guard)
    zs, ws = pts[:size], pts[size:]
    return [(z, w) for z in zs for w in ws]


def rs_avoid(state: RSState, params: ModelParams) -> list:
    q, eta = state.q, params.eta
    return [complex(q[i] - q[j] + s) for i in range(len(q)) for j in range(len(q)) for s in (eta, -eta, 0.0)
            if not (i == j and s == 0.0)]


def chain_avoid(state: ChainState, params: ModelParams) -> list:
    return [complex(v) for v in lm.chain_pole_shifts(state, params)] + [
        -complex(v) for v in lm.chain_pole_shifts(state, params)
    ]


# ---------------------------------------------------------------------------
# Ruijsenaars-Schneider quadratic structure


def rs_quadratic_sides(state: RSState, z, w, params: ModelParams, variant: str = "standard") -> dict:
    """``c {L_1(z), L_2(w)}`` next to the commutator and the four-term right sides."""
    lhs = params.c * dk.matrix_poisson_bracket(
        lambda s: lm.rs_lax(s, z, params, variant), lambda s: lm.rs_lax(s, w, params, variant), state
    )
    pr = rm.rs_products(state, z, w, params, variant)
    l1, l2, r = pr["L1"], pr["L2"], pr["r"]
    comm = (l1 @ l2 @ r - r @ l1 @ l2) + (l1 @ pr["L2s_minus"] - pr["L2s_minus"] @ l1) - (
        l2 @ pr["L1s_plus"] - pr["L1s_plus"] @ l2
    )
    a = rm.rs_assembled(state, z, w, params, variant)
    four = l1 @ l2 @ a["r_minus"] - a["r_plus"] @ l1 @ l2 + l1 @ a["s_plus"] @ l2 - l2 @ a["s_minus"] @ l1
    return {"lhs": lhs, "commutator": comm, "four_term": four, "scale": _mag(lhs, l1 @ l2 @ r, r @ l1 @ l2)}


def verify_rs_quadratic(state: RSState, z, w, params: ModelParams, variant: str = "standard",
                        tol: float = DEFAULT_TOL, seed=None, fd_oracle: bool = False) -> ResidualReport:
    s = rs_quadratic_sides(state, z, w, params, variant)
    res_c = tn.norm(s["lhs"] - s["commutator"])
    res_4 = tn.norm(s["lhs"] - s["four_term"])
    details = {"variant": variant, "commutator_form": res_c, "four_term_form": res_4,
               "forms_agree": tn.norm(s["commutator"] - s["four_term"])}
    if fd_oracle:
        fd = params.c * dk.fd_matrix_poisson_bracket(
            lambda st: lm.rs_lax(st, z, params, variant), lambda st: lm.rs_lax(st, w, params, variant), state
        )
        details["fd_vs_ad"] = tn.norm(fd - s["lhs"]) / max(1.0, tn.norm(s["lhs"]))
    return make_report("rs-quadratic", "RS quadratic r-matrix structure", params, seed, [(z, w)],
                       max(res_c, res_4), s["scale"], tol, **details)


def _trace_power(mat, k: int):
    out = mat
    for _ in range(k - 1):
        out = lm.matmul(out, mat)
    acc = 0.0
    for i in range(out.shape[0]):
        acc = acc + out[i, i]
    return acc


def verify_trace_involution(model: str, state, z, w, k: int, m: int, params: ModelParams,
                            tol: float = DEFAULT_TOL, seed=None) -> ResidualReport:
    if not (1 <= k <= 4 and 1 <= m <= 4):
        raise ValueError("trace powers must lie in 1..4")
    if model == "RS":
        mat = lambda s, x: lm.rs_lax(s, x, params)  # noqa: E731
    elif model == "chain":
        mat = lambda s, x: lm.chain_monodromy(s, x, params)  # noqa: E731
    else:
        raise ValueError(f"unknown model {model!r}")
    f = lambda s: _trace_power(mat(s, z), k)  # noqa: E731
    g = lambda s: _trace_power(mat(s, w), m)  # noqa: E731
    br = dk.poisson_bracket(f, g, state)
    scale = abs(complex(f(state))) * abs(complex(g(state)))
    return make_report(f"{model.lower()}-trace-involution", "involution of trace powers", params, seed,
                       [(z, w)], abs(br), scale, tol, k=k, m=m, bracket=complex(br))


# ---------------------------------------------------------------------------
# Calogero-Moser linear structure


def verify_cm_linear(state: RSState, z, w, params: ModelParams, tol: float = DEFAULT_TOL, seed=None,
                     fd_oracle: bool = False) -> ResidualReport:
    lhs = dk.matrix_poisson_bracket(lambda s: lm.cm_lax(s, z, params), lambda s: lm.cm_lax(s, w, params), state)
    l1 = tn.one(lm.cm_lax(state, z, params))
    l2 = tn.two(lm.cm_lax(state, w, params))
    r12 = rm.cm_r12(state, z, w, params)
    r21 = tn.swap(rm.cm_r12(state, w, z, params))
    t1 = l1 @ r12 - r12 @ l1
    t2 = l2 @ r21 - r21 @ l2
    details = {}
    if fd_oracle:
        fd = dk.fd_matrix_poisson_bracket(lambda s: lm.cm_lax(s, z, params), lambda s: lm.cm_lax(s, w, params), state)
        details["fd_vs_ad"] = tn.norm(fd - lhs) / max(1.0, tn.norm(lhs))
    return make_report("cm-linear", "CM linear r-matrix structure", params, seed, [(z, w)],
                       tn.norm(lhs - (t1 - t2)), _mag(lhs, t1, t2), tol, **details)


# ---------------------------------------------------------------------------
# chain


def chain_rhs(state: ChainState, a: int, b: int, z, w, params: ModelParams) -> np.ndarray:
    """Right side of the site structure for ``c {L^a_1(z), L^b_2(w)}``, tails included."""
    n = state.n
    tb = rm.chain_tensors(state, b, z, w, params)
    rhs = np.zeros_like(tb["L1"])
    if (a - b) % n == 0:
        rprev = rm.r_matrix(state.qs(b - 1), z, w, params)
        l1, l2 = tb["L1"], tb["L2"]
        rhs = rhs + l1 @ l2 @ tb["r"] - rprev @ l1 @ l2 + tb["L1s_plus"] @ l2 - tb["L2s_minus"] @ l1
    if (a - (b - 1)) % n == 0:
        rhs = rhs + tn.one(lm.chain_lax(state, b - 1, z, params)) @ tb["L2s_minus"]
    if (a - (b + 1)) % n == 0:
        nxt = rm.chain_tensors(state, b + 1, z, w, params)
        rhs = rhs - tb["L2"] @ nxt["L1s_plus"]
    return rhs


def verify_chain_thm1(state: ChainState, a: int, b: int, z, w, params: ModelParams,
                      tol: float = DEFAULT_TOL, seed=None, fd_oracle: bool = False) -> ResidualReport:
    lhs = params.c * dk.matrix_poisson_bracket(
        lambda s: lm.chain_lax(s, a, z, params), lambda s: lm.chain_lax(s, b, w, params), state
    )
    rhs = chain_rhs(state, a, b, z, w, params)
    n = state.n
    gap = min((a - b) % n, (b - a) % n)
    details = {"a": a, "b": b, "site_gap": gap}
    if gap >= 2:
        details["lhs_exact_zero"] = bool(np.all(lhs == 0))
        details["rhs_exact_zero"] = bool(np.all(rhs == 0))
    if fd_oracle:
        fd = params.c * dk.fd_matrix_poisson_bracket(
            lambda s: lm.chain_lax(s, a, z, params), lambda s: lm.chain_lax(s, b, w, params), state
        )
        details["fd_vs_ad"] = tn.norm(fd - lhs) / max(1.0, tn.norm(lhs))
    t = rm.chain_tensors(state, b, z, w, params)
    scale = _mag(lhs, t["L1"] @ t["L2"] @ t["r"])
    return make_report("chain-thm1", "chain site r-matrix structure", params, seed, [(z, w)],
                       tn.norm(lhs - rhs), scale, tol, **details)


def sweep_chain_thm1(state: ChainState, z, w, params: ModelParams, tol: float = DEFAULT_TOL, seed=None) -> list:
    n = state.n
    return [verify_chain_thm1(state, a, b, z, w, params, tol, seed) for a in range(1, n + 1) for b in range(1, n + 1)]


def monodromy_rhs(state: ChainState, z, w, params: ModelParams) -> dict:
    n = state.n
    tz = lm.chain_monodromy(state, z, params)
    tw = lm.chain_monodromy(state, w, params)
    br = rm.monodromy_breve(state, z, w, params)
    t1, t2 = tn.one(tz), tn.two(tw)
    rn = rm.r_matrix(state.qs(n), z, w, params)
    sp, sm = br["s_plus"], br["s_minus"]
    r_minus = rn - sp + sm
    rhs = t1 @ t2 @ rn - r_minus @ t1 @ t2 + t1 @ sm @ t2 - t2 @ sp @ t1
    return {"rhs": rhs, "r_plus": rn, "r_minus": r_minus, "s_plus": sp, "s_minus": sm, "T1": t1, "T2": t2,
            "formula_gap": max(tn.norm(sp - br["s_plus_formula"]), tn.norm(sm - br["s_minus_formula"]))}


def leibniz_monodromy_bracket(state: ChainState, z, w, params: ModelParams) -> np.ndarray:
    """``{T_1(z), T_2(w)}`` as a sum over site pairs of sandwiched site brackets."""
    n = state.n
    lz = [lm.chain_lax(state, a, z, params) for a in range(1, n + 1)]
    lw = [lm.chain_lax(state, a, w, params) for a in range(1, n + 1)]
    size = lz[0].shape[0]
    eye = np.eye(size, dtype=complex)

    def prod(mats):
        out = eye
        for mm in mats:
            out = out @ mm
        return out

    total = np.zeros((size * size, size * size), dtype=complex)
    for a in range(1, n + 1):
        for b in range(1, n + 1):
            gap = min((a - b) % n, (b - a) % n)
            if gap >= 2:
                continue
            site = dk.matrix_poisson_bracket(
                lambda s, a=a: lm.chain_lax(s, a, z, params), lambda s, b=b: lm.chain_lax(s, b, w, params), state
            )
            left = np.kron(prod(lz[: a - 1]), prod(lw[: b - 1]))
            right = np.kron(prod(lz[a:]), prod(lw[b:]))
            total = total + left @ site @ right
    return total


def verify_monodromy_thm2(state: ChainState, z, w, params: ModelParams, tol: float = DEFAULT_TOL,
                          seed=None) -> ResidualReport:
    lhs = params.c * dk.matrix_poisson_bracket(
        lambda s: lm.chain_monodromy(s, z, params), lambda s: lm.chain_monodromy(s, w, params), state
    )
    out = monodromy_rhs(state, z, w, params)
    leib = params.c * leibniz_monodromy_bracket(state, z, w, params)
    back = monodromy_rhs(state, w, z, params)
    skew = max(
        tn.norm(out["r_plus"] + tn.swap(back["r_plus"])),
        tn.norm(out["r_minus"] + tn.swap(back["r_minus"])),
        tn.norm(out["s_plus"] - tn.swap(back["s_minus"])),
    )
    scale = _mag(lhs, out["T1"] @ out["T2"] @ out["r_plus"])
    return make_report("monodromy-thm2", "monodromy r-matrix structure", params, seed, [(z, w)],
                       tn.norm(lhs - out["rhs"]), scale, tol, leibniz_vs_direct=tn.norm(leib - lhs) / max(1.0, scale),
                       breve_formula_gap=out["formula_gap"], skew_symmetry=skew)


# ---------------------------------------------------------------------------
# gauge-variant Lax matrix


def verify_appb(state: RSState, z, w, params: ModelParams, variant: str = "standard", tol: float = DEFAULT_TOL,
                seed=None) -> ResidualReport:
    lhs = params.c * dk.matrix_poisson_bracket(
        lambda s: rm.appb_lax(s, z, params, variant), lambda s: rm.appb_lax(s, w, params, variant), state
    )
    t = rm.appb_tensors(state, z, w, params, variant)
    l1, l2 = t["L1"], t["L2"]
    rhs = t["a"] @ l1 @ l2 + l1 @ t["b"] @ l2 - l2 @ t["c"] @ l1 - l1 @ l2 @ t["d"]
    back = rm.appb_tensors(state, w, z, params, variant)
    skew = {
        "a": tn.norm(t["a"] + tn.swap(back["a"])),
        "d": tn.norm(t["d"] + tn.swap(back["d"])),
        "c_vs_b": tn.norm(t["c"] - tn.swap(back["b"])),
    }
    closed = max(tn.norm(l1 @ t["s12"] - t["L1s12_closed"]), tn.norm(l2 @ t["s21"] - t["L2s21_closed"]))
    scale = _mag(lhs, t["a"] @ l1 @ l2, l1 @ l2 @ t["d"])
    return make_report("appb", "gauge-variant quadratic structure", params, seed, [(z, w)],
                       tn.norm(lhs - rhs), scale, tol, skew=skew, closed_form_gap=closed,
                       gauge=appb_gauge_residual(state, z, params, variant))


def appb_gauge_residual(state: RSState, z, params: ModelParams, variant: str = "standard") -> float:
    """``tilde L = D L D^{-1}`` with ``D = diag(b)``, relative to ``|tilde L|``."""
    d = np.diag(lm.rs_b(state, params, variant))
    lt = rm.appb_lax(state, z, params, variant)
    return float(np.max(np.abs(lt - d @ lm.rs_lax(state, z, params, variant) @ np.linalg.inv(d)))
                 / max(1.0, np.max(np.abs(lt))))


# ---------------------------------------------------------------------------
# eps -> 0 limit of the RS field structure
#
# The RS field U-matrix is -1/(nu eps) + U^CM/nu + O(eps), with U^CM the k = 1
# CM U-matrix in the momentum tilde p (see fieldkit.cm_limit_U).  Contour
# evaluations in eps run with a reduced guard, since the diagonal argument of
# the Kronecker function is about -eps alpha_i^2.

CONTOUR_GUARD = 1e-7
BLOCK_NAMES = ("delta_ik", "1-delta_ik", "delta_il", "1-delta_il", "delta_jk", "1-delta_jk")


def contour_params(params: ModelParams) -> ModelParams:
    return params.replace(guard=min(params.guard, CONTOUR_GUARD))


def field_at(fp: fk.FieldPoint, eps) -> fk.FieldPoint:
    return fk.eval_fieldpoint(fp.cfg, fp.x, eps=eps, shifts=(-2, -1, 0, 1), check=False)


def _field_U_pair(fpe: fk.FieldPoint, z, w, params: ModelParams):
    return (np.asarray(fk.rs_field_U(fpe, z, params), dtype=complex),
            np.asarray(fk.rs_field_U(fpe, w, params), dtype=complex))


def _unit4(n: int, i, j, k, l) -> np.ndarray:
    out = np.zeros((n, n, n, n), dtype=complex)
    out[i, j, k, l] = 1.0
    return out


def appc_blocks(fp: fk.FieldPoint, z, w, eps, params: ModelParams) -> list:
    """The six component blocks of ``eps nu^2 ([U_1 s^+, U_2] - [U_2 s^-, U_1])`` at finite ``eps``."""
    params = contour_params(params)
    m, nu = params.modulus, params.nu
    fpe = field_at(fp, eps)
    qx, qm = fpe.qs(0), fpe.qs(-1)
    uz, uw = _field_U_pair(fpe, z, w, params)
    n = fp.N
    sh = -nu * eps
    e1 = lambda u: el.e1(u, m)  # noqa: E731
    blocks = [np.zeros((n, n, n, n), dtype=complex) for _ in range(6)]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    pre = eps * nu * nu * uz[i, j] * uw[k, l]
                    if i == k:
                        blocks[0][i, j, k, l] = pre * (e1(z + qm[i] - qx[j] + sh) - e1(w + qm[i] - qx[l] + sh))
                    else:
                        blocks[1][i, j, k, l] = pre * (e1(qm[k] - qx[j] + sh) - e1(qm[i] - qx[l] + sh))
                    if i == l:
                        blocks[2][i, j, k, l] = -pre * e1(z + qm[i] - qx[j] + sh)
                    else:
                        blocks[3][i, j, k, l] = -pre * e1(qm[l] - qx[j] + sh)
                    if j == k:
                        blocks[4][i, j, k, l] = pre * e1(w + qm[k] - qx[l] + sh)
                    else:
                        blocks[5][i, j, k, l] = pre * e1(qm[j] - qx[l] + sh)
    return [tn.from_coeffs(b) for b in blocks]


def appc_commutator_form(fp: fk.FieldPoint, z, w, eps, params: ModelParams, minus_sign: int = +1) -> np.ndarray:
    """``eps nu^2 ([U_1 s^+, U_2] - [U_2 s^-, U_1])`` from the bold field tensors."""
    params = contour_params(params)
    fpe = field_at(fp, eps)
    uz, uw = _field_U_pair(fpe, z, w, params)
    t = rm.field_tensors(fpe.qs(0), fpe.qs(-1), uz, uw, z, w, eps, params, minus_sign=minus_sign)
    a = t["U1s_plus"] @ t["U2"] - t["U2"] @ t["U1s_plus"]
    b = t["U2s_minus"] @ t["U1"] - t["U1"] @ t["U2s_minus"]
    return eps * params.nu ** 2 * (a - b)


def appc_local_bracket(fp: fk.FieldPoint, z, w, eps, params: ModelParams, minus_sign: int = +1) -> np.ndarray:
    """``eps (U_1U_2 r(x) - r(x-eps) U_1U_2 + [U_1 s^+, U_2] - [U_2 s^-, U_1])``."""
    params = contour_params(params)
    fpe = field_at(fp, eps)
    uz, uw = _field_U_pair(fpe, z, w, params)
    t = rm.field_tensors(fpe.qs(0), fpe.qs(-1), uz, uw, z, w, eps, params, q_xmm=fpe.qs(-2),
                         minus_sign=minus_sign)
    uu = t["U1"] @ t["U2"]
    a = t["U1s_plus"] @ t["U2"] - t["U2"] @ t["U1s_plus"]
    b = t["U2s_minus"] @ t["U1"] - t["U1"] @ t["U2s_minus"]
    return eps * (uu @ t["r"] - t["r_shifted"] @ uu + a - b)


def limit_pieces(fp: fk.FieldPoint, z, w, params: ModelParams) -> dict:
    """Closed forms at ``eps = 0``: CM U-matrices, r-matrices, their x-derivatives and the f-term."""
    m = params.modulus
    n = fp.N
    q = np.asarray(fp.qs(0), dtype=complex)
    qx = np.asarray(fp.qs(0, 1), dtype=complex)
    A = fk.limit_alpha2(fp, params)
    state = RSState(p=np.asarray(fp.ps(0), dtype=complex), q=q)
    d_cm, d_r, ft = (np.zeros((n, n, n, n), dtype=complex) for _ in range(3))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dq = qx[i] - qx[j]
            fzw = el.phi_du(z - w, q[i] - q[j], m) * dq
            d_cm[i, j, j, i] = fzw
            d_cm[i, i, j, i] = -el.phi_du(-w, q[i] - q[j], m) * dq
            d_r[i, j, j, i] = fzw
            d_r[i, i, j, j] = el.e2(q[i] - q[j], m) * dq
            ft[i, i, j, i] = (A[j] - A[i]) * el.phi_du(w, q[j] - q[i], m)
    return {
        "A": A,
        "q": q,
        "Uz": np.asarray(fk.cm_limit_U(fp, z, params), dtype=complex),
        "Uw": np.asarray(fk.cm_limit_U(fp, w, params), dtype=complex),
        "r_cm12": rm.cm_r12(state, z, w, params),
        "r_cm21": tn.swap(rm.cm_r12(state, w, z, params)),
        "r": rm.r_matrix(q, z, w, params),
        "dx_r_cm12": tn.from_coeffs(d_cm),
        "dx_r": tn.from_coeffs(d_r),
        "F": tn.from_coeffs(ft),
    }


def appc_block_limits(fp: fk.FieldPoint, z, w, params: ModelParams) -> list:
    """Closed-form eps^0 parts of the six blocks, term by term as displayed."""
    m = params.modulus
    lp = limit_pieces(fp, z, w, params)
    A, q, uz, uw = lp["A"], lp["q"], lp["Uz"], lp["Uw"]
    n = fp.N
    e1 = lambda u: el.e1(u, m)  # noqa: E731
    e2 = lambda u: el.e2(u, m)  # noqa: E731
    ph = lambda a, b: el.kronecker_phi(a, b, m)  # noqa: E731
    E = lambda *idx: _unit4(n, *idx)  # noqa: E731
    c = [np.zeros((n, n, n, n), dtype=complex) for _ in range(6)]
    for i in range(n):
        c[0] += -A[i] * (e2(w) - e2(z)) * E(i, i, i, i)
        c[2] += -A[i] * e2(z) * E(i, i, i, i)
        c[4] += e2(w) * A[i] * E(i, i, i, i)
        for j in range(n):
            qij = q[i] - q[j]
            c[0] += -uw[i, j] * (e1(z) - e1(w + qij)) * E(i, i, i, j) - uz[i, j] * (e1(z + qij) - e1(w)) * E(i, j, i, i)
            c[2] += e1(z) * uw[i, j] * E(j, j, i, j) + e1(z + qij) * uz[i, j] * E(i, j, i, i)
            c[4] += -uz[i, j] * e1(w) * E(i, j, j, j) - uw[i, j] * e1(w + qij) * E(i, i, i, j)
            if i != j:
                c[1] += -e2(-qij) * (A[i] - A[j]) * E(i, i, j, j)
                c[3] += -A[i] * e2(-qij) * E(i, i, j, j)
                c[5] += A[i] * e2(qij) * E(i, i, j, j)
            for k in range(n):
                qki, qkj = q[k] - q[i], q[k] - q[j]
                if k != i:
                    c[1] += (-uw[i, j] * ph(z, qki) * E(k, i, i, j) + uz[i, j] * ph(w, qki) * E(i, j, k, i)
                             - uw[i, j] * e1(-qki) * E(k, k, i, j) + uz[i, j] * e1(-qki) * E(i, j, k, k))
                    if k != j:
                        c[1] += -uz[i, j] * e1(qkj) * E(i, j, k, k) + uw[i, j] * e1(qkj) * E(k, k, i, j)
                        c[3] += uz[i, j] * e1(qkj) * E(i, j, k, k)
                        c[5] += -uw[i, j] * e1(qkj) * E(k, k, i, j)
                if k != j:
                    c[3] += ph(z, qkj) * uw[i, j] * E(k, j, i, j) + uw[i, j] * e1(-qkj) * E(k, k, i, j)
                    c[5] += -uz[i, j] * ph(w, qkj) * E(i, j, k, j) + uz[i, j] * e1(qkj) * E(i, j, k, k)
    return [tn.from_coeffs(b) for b in c]


def ultralocal_cm_terms(lp: dict) -> dict:
    """``-d_x(r^CM_12 - r)``, ``[U_1, r^CM_12 - r]``, ``-[U_2, r^CM_21 + r]`` and the f-term."""
    u1, u2 = tn.one(lp["Uz"]), tn.two(lp["Uw"])
    a = lp["r_cm12"] - lp["r"]
    b = lp["r_cm21"] + lp["r"]
    return {
        "dx": -(lp["dx_r_cm12"] - lp["dx_r"]),
        "comm_1": u1 @ a - a @ u1,
        "comm_2": -(u2 @ b - b @ u2),
        "f_term": lp["F"],
    }


def ultralocal_prelimit(fp: fk.FieldPoint, z, w, params: ModelParams, window: LaurentWindow | None = None,
                        minus_sign: int = +1) -> dict:
    """The relation with the exact ``nu^2 lim eps(...)`` from a contour in eps."""
    window = window or LaurentWindow()
    lp = limit_pieces(fp, z, w, params)
    u1, u2 = tn.one(lp["Uz"]), tn.two(lp["Uw"])
    co = window.coeffs(lambda e: appc_local_bracket(fp, z, w, e, params, minus_sign))
    cm = (-lp["dx_r_cm12"] + u1 @ lp["r_cm12"] - lp["r_cm12"] @ u1 - (u2 @ lp["r_cm21"] - lp["r_cm21"] @ u2)
          + lp["F"])
    total = cm + params.nu ** 2 * co[0]
    return {"total": total, "singular": max(tn.norm(co[o]) for o in co if o < 0), "scale": _mag(cm, co[0])}


def verify_field_ultralocal(fp: fk.FieldPoint, z, w, params: ModelParams, tol: float = DEFAULT_TOL, seed=None,
                            window: LaurentWindow | None = None, prelimit: bool = True) -> ResidualReport:
    """Sum of the closed-form limits of every term of the ultralocal relation.

    Details carry two corroborations: the component blocks against the
    commutator form for each sign of ``u^-`` in ``s^-``, and the relation
    with the exact contour limit in place of the displayed blocks.
    """
    lp = limit_pieces(fp, z, w, params)
    terms = ultralocal_cm_terms(lp)
    blocks = appc_block_limits(fp, z, w, params)
    total = sum(terms.values()) + sum(blocks)
    scale = _mag(*terms.values(), *blocks)
    details = {"terms": {k: tn.norm(v) for k, v in terms.items()},
               "blocks": {BLOCK_NAMES[i]: tn.norm(b) for i, b in enumerate(blocks)}}
    if prelimit:
        window = window or LaurentWindow()
        eps = complex(window.rho)
        comp = sum(appc_blocks(fp, z, w, eps, params))
        details["component_vs_commutator"] = {
            str(s): tn.norm(comp - appc_commutator_form(fp, z, w, eps, params, s)) / max(1.0, tn.norm(comp))
            for s in (+1, -1)
        }
        pre = ultralocal_prelimit(fp, z, w, params, window)
        details["prelimit_total"] = tn.norm(pre["total"]) / max(1.0, pre["scale"])
        details["prelimit_singular"] = pre["singular"]
    return make_report("field-ultralocal", "ultralocal part of the field structure in the CM limit", params, seed,
                       [(z, w)], tn.norm(total), scale, tol, **details)


def appc_block_sequence(fp: fk.FieldPoint, z, w, params: ModelParams, eps: float = 1e-3, seed=None,
                        factor: float = 1.0) -> list:
    """Each block against its real-eps pre-limit.

    ``eps^2 block(eps)`` is sampled at ``eps, eps/2, eps/4, eps/8`` and fitted
    by ``c_{-2} + c_{-1} e + c_0 e^2 + c_1 e^3``, so the fitted ``c_0`` is off by
    O(eps^2).  A block passes when it is within ``factor * eps`` of its closed
    form (scaled).
    """
    es = eps / 2.0 ** np.arange(4)
    vand = np.vander(es, 4, increasing=True)
    samples = [appc_blocks(fp, z, w, e, params) for e in es]
    closed = appc_block_limits(fp, z, w, params)
    out = []
    for b in range(6):
        ys = np.array([e * e * s[b] for e, s in zip(es, samples)])
        fit = np.linalg.solve(vand, ys.reshape(4, -1)).reshape(ys.shape)
        c0 = fit[2]
        out.append(make_report(f"field-block-{BLOCK_NAMES[b]}", "eps^0 part of one component block", params, seed,
                               [(z, w)], tn.norm(c0 - closed[b]), _mag(c0, closed[b]), factor * eps,
                               block=BLOCK_NAMES[b], eps=eps))
    return out


def nonultralocal_three_sum(fp: fk.FieldPoint, z, w, params: ModelParams) -> np.ndarray:
    """``(E1(z)+E1(w)) sum E_ii E_ii + sum phi(w, q_ji) E_ii E_ji + sum phi(z, q_ij) E_ij E_jj``."""
    m = params.modulus
    q = fp.qs(0)
    n = fp.N
    c = np.zeros((n, n, n, n), dtype=complex)
    for i in range(n):
        c[i, i, i, i] = el.e1(z, m) + el.e1(w, m)
        for j in range(n):
            if i != j:
                c[i, i, j, i] += el.kronecker_phi(w, q[j] - q[i], m)
                c[i, j, j, j] += el.kronecker_phi(z, q[i] - q[j], m)
    return tn.from_coeffs(c)


def nonultralocal_prelimit(fp: fk.FieldPoint, z, w, eps, params: ModelParams) -> np.ndarray:
    """``eps^2 U_ij(z) U_kl(w) [...]`` of the delta' term at finite eps (y = x)."""
    params = contour_params(params)
    m, nu = params.modulus, params.nu
    fpe = field_at(fp, eps)
    qx, qm = fpe.qs(0), fpe.qs(-1)
    uz, uw = _field_U_pair(fpe, z, w, params)
    n = fp.N
    sh = -nu * eps
    c = np.zeros((n, n, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    v = el.e1(w + qm[k] - qx[l] + sh, m) if j == k else el.e1(qm[j] - qx[l] + sh, m)
                    v = v + (el.e1(z + qm[i] - qx[j] + sh, m) if i == l else el.e1(qm[l] - qx[j] + sh, m))
                    c[i, j, k, l] = eps * eps * uz[i, j] * uw[k, l] * v
    return tn.from_coeffs(c)


def verify_nonultralocal_coefficient(fp: fk.FieldPoint, z, w, params: ModelParams, tol: float = 1e-10, seed=None,
                                     window: LaurentWindow | None = None, prelimit: bool = True) -> ResidualReport:
    three = nonultralocal_three_sum(fp, z, w, params)
    state = RSState(p=np.asarray(fp.ps(0), dtype=complex), q=np.asarray(fp.qs(0), dtype=complex))
    rr = rm.cm_r12(state, z, w, params) + tn.swap(rm.cm_r12(state, w, z, params))
    details = {"symmetry": tn.norm(three - tn.swap(nonultralocal_three_sum(fp, w, z, params)))}
    if prelimit:
        window = window or LaurentWindow()
        co = window.coeffs(lambda e: nonultralocal_prelimit(fp, z, w, e, params))
        details["prelimit_vs_three_sum"] = tn.norm(params.nu ** 2 * co[0] - three) / max(1.0, tn.norm(three))
        details["prelimit_singular"] = max(tn.norm(co[o]) for o in co if o < 0)
    return make_report("field-coefficient", "non-ultralocal coefficient of the field structure", params, seed,
                       [(z, w)], tn.norm(three - rr), _mag(three, rr), tol, **details)
