"""Periodic 1+1 field configurations and the CM / RS field theories on them.

Fields are truncated Fourier series, so x-derivatives and x-shifts are exact.
Every CM formula consumes ``A_i = alpha_i^2 = k q_{i,x} + nu`` and its
x-derivatives only; ``alpha`` itself (a principal root) enters nothing but the
literal density diagnostic.

The RS field theory uses ``1/c = -eps`` and ``eta = -nu eps``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from rslab import diffkit as dk
from rslab import elliptic as el
from rslab import laxmodels as lm
from rslab.laxmodels import as_matrix
from rslab.states import ModelParams, tilde_p

JET_ORDER = 4
ALPHA_FLOOR = 0.1


class FieldGuardError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configurations


@dataclass
class FieldConfig:
    """``q_i = Q_i + sum_m c[i, m+M] e^{imx}``, ``p_i = sum_m d[i, m+M] e^{imx}``."""

    Q: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=complex)
        self.c = np.asarray(self.c, dtype=complex)
        self.d = np.asarray(self.d, dtype=complex)
        if self.c.shape != self.d.shape or self.c.shape[0] != len(self.Q) or self.c.shape[1] % 2 != 1:
            raise ValueError("coefficient arrays must both have shape (N, 2M+1)")

    @property
    def N(self) -> int:
        return len(self.Q)

    @property
    def M(self) -> int:
        return (self.c.shape[1] - 1) // 2

    def _series(self, coeffs, x, order: int, center=None):
        modes = np.arange(-self.M, self.M + 1)
        if isinstance(x, dk.Dual):
            waves = [dk.exp(1j * m * x) for m in modes]
            out = np.empty(self.N, dtype=object)
            for i in range(self.N):
                acc = center[i] if (center is not None and order == 0) else 0.0
                for k, m in enumerate(modes):
                    acc = acc + coeffs[i, k] * (1j * m) ** order * waves[k]
                out[i] = acc
            return out
        waves = np.exp(1j * modes * complex(x)) * (1j * modes) ** order
        out = coeffs @ waves
        if center is not None and order == 0:
            out = out + center
        return out

    def q(self, x, order: int = 0):
        return self._series(self.c, x, order, center=self.Q)

    def p(self, x, order: int = 0):
        return self._series(self.d, x, order)

    def to_json(self, params: ModelParams | None = None) -> str:
        def pairs(a):
            return [[float(v.real), float(v.imag)] for v in np.ravel(a)]

        doc = {
            "N": self.N,
            "M": self.M,
            "Q": pairs(self.Q),
            "c": [pairs(row) for row in self.c],
            "d": [pairs(row) for row in self.d],
            "params": params.to_json() if params is not None else None,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str):
        doc = json.loads(text)

        def cx(rows):
            return np.array([[complex(*v) for v in row] for row in rows])

        cfg = cls(np.array([complex(*v) for v in doc["Q"]]), cx(doc["c"]), cx(doc["d"]))
        params = ModelParams.from_json(doc["params"]) if doc.get("params") else None
        return cfg, params


def sample_field(seed: int, params: ModelParams, M: int = 2, amplitude: float = 0.03,
                 momentum: float = 0.3, guard: float = 0.05) -> FieldConfig:
    """Small-amplitude random fields around well separated centers."""
    rng = np.random.default_rng(seed)
    N = params.N
    m = params.modulus
    for _ in range(1000):
        Q = rng.uniform(-0.5, 0.5, N) + rng.uniform(-0.5, 0.5, N) * params.tau
        ok = all(
            el.lattice_distance(Q[i] - Q[j] + s, m) >= 4 * guard
            for i in range(N) for j in range(N) if i != j
            for s in (0.0, params.eta, -params.eta)
        )
        if ok:
            break
    else:
        raise FieldGuardError(f"no separated field centers after 1000 draws (seed {seed})")
    shape = (N, 2 * M + 1)
    decay = 1.0 / (1.0 + np.abs(np.arange(-M, M + 1))) ** 2
    c = amplitude * (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * decay
    d = momentum * (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * decay
    c[:, M] = 0.0
    return FieldConfig(Q, c, d)


def constant_field(q, p) -> FieldConfig:
    q = np.asarray(q, dtype=complex)
    p = np.asarray(p, dtype=complex)
    return FieldConfig(q, np.zeros((len(q), 1)), p.reshape(-1, 1))


def pad_modes(cfg: FieldConfig, M: int) -> FieldConfig:
    """The same fields written with ``M >= cfg.M`` modes."""
    if M < cfg.M:
        raise ValueError("cannot truncate a configuration")
    extra = np.zeros((cfg.N, M - cfg.M), dtype=complex)
    return FieldConfig(cfg.Q, np.hstack([extra, cfg.c, extra]), np.hstack([extra, cfg.d, extra]))


def euler_step(cfg: FieldConfig, params: ModelParams, dt: complex, model: str = "cm",
               eps=None, nodes: int = 64, modes: int = 24) -> FieldConfig:
    """Advance the Fourier coefficients by one explicit Euler step of the field flow.

    The flow is sampled at ``nodes`` equispaced points and projected onto
    ``|m| <= modes``; the flow is analytic, so the dropped tail is negligible.
    """
    cfg = pad_modes(cfg, max(cfg.M, modes))
    xs = 2 * np.pi * np.arange(nodes) / nodes
    qd = np.empty((cfg.N, nodes), dtype=complex)
    pd = np.empty((cfg.N, nodes), dtype=complex)
    for k, x in enumerate(xs):
        fp = eval_fieldpoint(cfg, x, eps if eps is not None else 0.0, check=False)
        if model == "cm":
            e = cm_field_eom(fp, params)
        else:
            e = rs_field_eom(fp, params)
        qd[:, k] = e["qdot"]
        pd[:, k] = e["pdot"]
    modes = np.arange(-cfg.M, cfg.M + 1)
    basis = np.exp(-1j * np.outer(xs, modes)) / nodes
    cq = qd @ basis
    cp = pd @ basis
    Q = cfg.Q + dt * cq[:, cfg.M]
    c = cfg.c + dt * cq
    c[:, cfg.M] = 0.0
    return FieldConfig(Q, c, cfg.d + dt * cp)


# ---------------------------------------------------------------------------
# field points


@dataclass
class FieldPoint:
    """Jets ``q[r], p[r]`` (order r <= 4) at ``x + s eps`` for ``s`` in ``shifts``."""

    x: object
    eps: complex
    jets: dict
    cfg: FieldConfig | None = field(default=None, repr=False)

    def qs(self, s: int = 0, order: int = 0):
        return self.jets[s][0][order]

    def ps(self, s: int = 0, order: int = 0):
        return self.jets[s][1][order]

    @property
    def q(self):
        return self.jets[0][0]

    @property
    def p(self):
        return self.jets[0][1]

    @property
    def N(self) -> int:
        return len(self.jets[0][0][0])


def eval_fieldpoint(cfg: FieldConfig, x, eps=0.0, shifts=(-2, -1, 0, 1), params: ModelParams | None = None,
                    check: bool = True) -> FieldPoint:
    jets = {}
    for s in shifts:
        xs = x + s * eps
        jets[s] = (
            [cfg.q(xs, r) for r in range(JET_ORDER + 1)],
            [cfg.p(xs, r) for r in range(JET_ORDER + 1)],
        )
    fp = FieldPoint(x, complex(eps), jets, cfg)
    if check and params is not None:
        check_fieldpoint(fp, params)
    return fp


def check_fieldpoint(fp: FieldPoint, params: ModelParams, relativistic: bool = False) -> None:
    m = params.modulus
    q = [complex(dk.base_value(v)) for v in fp.qs(0)]
    qx = [complex(dk.base_value(v)) for v in fp.qs(0, 1)]
    N = len(q)
    for i in range(N):
        a2 = params.k * qx[i] + params.nu
        if abs(a2) < ALPHA_FLOOR * abs(params.nu):
            raise FieldGuardError(f"alpha^2 = {a2} too small for particle {i} at x = {fp.x}")
        for j in range(N):
            if i != j and el.lattice_distance(q[i] - q[j], m) < params.guard:
                raise FieldGuardError(f"q_{i} - q_{j} near the lattice at x = {fp.x}")
    if relativistic:
        qm = [complex(dk.base_value(v)) for v in fp.qs(-1)]
        for i in range(N):
            for j in range(N):
                d = q[i] - qm[j]
                for s in (params.nu * fp.eps, -params.nu * fp.eps):
                    if el.lattice_distance(d + s, m) < params.guard:
                        raise FieldGuardError(f"shifted difference q_{i}(x) - q_{j}(x-eps) near the lattice")


def shifted_fieldpoint(fp: FieldPoint, s: int) -> FieldPoint:
    """Re-center the jets at ``x + s eps`` (only the shifts available in ``fp`` are kept)."""
    jets = {t - s: v for t, v in fp.jets.items()}
    return FieldPoint(fp.x + s * fp.eps, fp.eps, jets, fp.cfg)


# ---------------------------------------------------------------------------
# Calogero-Moser field theory


def alpha_kappa(fp: FieldPoint, params: ModelParams):
    """``(alpha, alpha^2, kappa)``; ``alpha`` is the principal root."""
    k, nu = params.k, params.nu
    a2 = [k * v + nu for v in fp.qs(0, 1)]
    alpha = [dk.sqrt(v) for v in a2]
    kappa = 0.0
    for pj, aj in zip(fp.ps(0), a2):
        kappa = kappa - pj * aj
    kappa = kappa / (len(a2) * nu)
    return alpha, a2, kappa


def _cm_parts(fp: FieldPoint, params: ModelParams) -> dict:
    """Jets of ``A = alpha^2``, ``kappa`` and ``qdot`` up to second x-derivatives."""
    k, nu = params.k, params.nu
    N = fp.N
    q1, q2, q3, q4 = (fp.qs(0, r) for r in (1, 2, 3, 4))
    p0, p1, p2 = (fp.ps(0, r) for r in (0, 1, 2))
    A = [k * q1[i] + nu for i in range(N)]
    Ax = [k * q2[i] for i in range(N)]
    Axx = [k * q3[i] for i in range(N)]
    Axxx = [k * q4[i] for i in range(N)]
    kap = kap_x = kap_xx = 0.0
    for j in range(N):
        kap = kap + p0[j] * A[j]
        kap_x = kap_x + p1[j] * A[j] + p0[j] * Ax[j]
        kap_xx = kap_xx + p2[j] * A[j] + 2 * p1[j] * Ax[j] + p0[j] * Axx[j]
    kap, kap_x, kap_xx = (-v / (N * nu) for v in (kap, kap_x, kap_xx))
    S = [p0[i] + kap for i in range(N)]
    Sx = [p1[i] + kap_x for i in range(N)]
    Sxx = [p2[i] + kap_xx for i in range(N)]
    qd = [-2 * A[i] * S[i] for i in range(N)]
    qd_x = [-2 * (Ax[i] * S[i] + A[i] * Sx[i]) for i in range(N)]
    qd_xx = [-2 * (Axx[i] * S[i] + 2 * Ax[i] * Sx[i] + A[i] * Sxx[i]) for i in range(N)]
    # k alpha_x / alpha and alpha_xx / alpha through A only
    lx = [k * Ax[i] / (2 * A[i]) for i in range(N)]
    lxx = [Axx[i] / (2 * A[i]) - Ax[i] * Ax[i] / (4 * A[i] * A[i]) for i in range(N)]
    lxx_x = [
        Axxx[i] / (2 * A[i]) - Ax[i] * Axx[i] / (A[i] * A[i]) + Ax[i] ** 3 / (2 * A[i] ** 3) for i in range(N)
    ]
    return dict(A=A, Ax=Ax, Axx=Axx, kappa=kap, kappa_x=kap_x, qdot=qd, qdot_x=qd_x, qdot_xx=qd_xx,
                lx=lx, lxx=lxx, lxx_x=lxx_x)


def cm_field_U(fp: FieldPoint, z, params: ModelParams) -> np.ndarray:
    m = params.modulus
    parts = _cm_parts(fp, params)
    A, lx = parts["A"], parts["lx"]
    q, p = fp.qs(0), fp.ps(0)
    N = fp.N
    ez = el.e1(z, m)
    return as_matrix(
        [
            [p[i] + A[i] * ez - lx[i] if i == j else el.kronecker_phi(z, q[i] - q[j], m) * A[j] for j in range(N)]
            for i in range(N)
        ]
    )


def cm_field_V(fp: FieldPoint, z, params: ModelParams) -> np.ndarray:
    m = params.modulus
    k, nu = params.k, params.nu
    parts = _cm_parts(fp, params)
    A, Ax, kap, lx, lxx = parts["A"], parts["Ax"], parts["kappa"], parts["lx"], parts["lxx"]
    qd, qd_x = parts["qdot"], parts["qdot_x"]
    q, p = fp.qs(0), fp.ps(0)
    N = fp.N
    ez, wz = el.e1(z, m), el.wp(z, m)
    rows = []
    for i in range(N):
        row = []
        for j in range(N):
            if i == j:
                m0 = p[i] * p[i] + 2 * kap * p[i] + k * k * lxx[i]
                for l in range(N):
                    if l != i:
                        d = q[i] - q[l]
                        m0 = m0 - (2 * A[l] * A[l] + A[i] * A[l]) * el.wp(d, m) - 2 * k * Ax[l] * el.zeta_w(d, m)
                at = k * qd_x[i] / (2 * A[i])
                row.append(qd[i] * ez - N * nu * A[i] * wz - m0 - at)
            else:
                d = q[i] - q[j]
                mij = p[i] + p[j] + 2 * kap - lx[i] + lx[j]
                for l in range(N):
                    if l != i and l != j:
                        mij = mij - A[l] * (el.e1(q[i] - q[j], m) + el.e1(q[j] - q[l], m) + el.e1(q[l] - q[i], m))
                ph = el.kronecker_phi(z, d, m)
                row.append((N * nu * (el.phi_du(z, d, m) - ez * ph) - mij * ph) * A[j])
        rows.append(row)
    return as_matrix(rows)


def cm_field_eom(fp: FieldPoint, params: ModelParams, pdot_form: str = "variational") -> dict:
    """``qdot, pdot`` and the x-derivatives of ``qdot`` at ``fp.x``.

    ``pdot_form="variational"`` carries ``3 k^2 A q_xx`` on the ``wp(q_ij)`` term, which is
    the variational derivative of the density.  ``"compact"`` uses ``6 alpha^3 alpha_x =
    3 k A q_xx`` literally; the two coincide at ``k = 1``.
    """
    m = params.modulus
    k = params.k
    parts = _cm_parts(fp, params)
    A, kap, kap_x, lxx_x = parts["A"], parts["kappa"], parts["kappa_x"], parts["lxx_x"]
    q = fp.qs(0)
    q2, q3 = fp.qs(0, 2), fp.qs(0, 3)
    p0, p1 = fp.ps(0), fp.ps(0, 1)
    N = fp.N
    coef = {"compact": 3 * k, "variational": 3 * k * k}[pdot_form]
    pd = []
    for i in range(N):
        g_x = 2 * p0[i] * p1[i] + 2 * kap_x * p0[i] + 2 * kap * p1[i] + k * k * lxx_x[i]
        acc = -k * g_x
        for j in range(N):
            if j != i:
                d = q[i] - q[j]
                acc = acc - 2 * (
                    A[j] ** 3 * el.wp_d(d, m)
                    - coef * A[j] * q2[j] * el.wp(d, m)
                    - k ** 3 * q3[j] * el.zeta_w(d, m)
                )
        pd.append(acc)
    return {
        "qdot": np.array(parts["qdot"], dtype=complex) if not _has_dual(parts["qdot"]) else parts["qdot"],
        "pdot": pd,
        "qdot_x": parts["qdot_x"],
        "qdot_xx": parts["qdot_xx"],
    }


def _has_dual(vals) -> bool:
    return any(isinstance(v, dk.Dual) for v in vals)


def cm_field_density(fp: FieldPoint, params: ModelParams, form: str = "compact"):
    """Hamiltonian density.

    ``form``: ``"expanded"`` is the form in ``q_x, q_xx``; ``"compact"`` is the
    alpha form with the zeta coefficient written through ``A = alpha^2``;
    ``"compact-literal"`` keeps the printed ``alpha_i alpha_{j,x} - alpha_j alpha_{i,x}``
    with principal roots (kept as a diagnostic; it does not match the expanded form).
    """
    m = params.modulus
    k, nu = params.k, params.nu
    q = fp.qs(0)
    q1, q2 = fp.qs(0, 1), fp.qs(0, 2)
    p = fp.ps(0)
    N = fp.N
    A = [k * q1[i] + nu for i in range(N)]
    Ax = [k * q2[i] for i in range(N)]
    out = 0.0
    if form == "expanded":
        s = 0.0
        for j in range(N):
            out = out - p[j] * p[j] * A[j] + k ** 4 * q2[j] * q2[j] / (4 * A[j])
            s = s + p[j] * A[j]
        out = out + s * s / (N * nu)
        for i in range(N):
            for j in range(N):
                if i != j:
                    d = q[i] - q[j]
                    w = A[i] * A[i] * A[j] + A[i] * A[j] * A[j] - nu * k * k * (q1[i] - q1[j]) ** 2
                    out = out + w * el.wp(d, m) / 2
                    out = out + k ** 3 / 2 * (q1[i] * q2[j] - q2[i] * q1[j]) * el.zeta_w(d, m)
        return out
    if form not in ("compact", "compact-literal"):
        raise ValueError(f"unknown density form {form!r}")
    alpha, a2, kap = alpha_kappa(fp, params)
    for i in range(N):
        # k^2 alpha_x^2 = k^2 A_x^2 / (4 A)
        out = out - p[i] * p[i] * a2[i] + k * k * Ax[i] * Ax[i] / (4 * a2[i])
    out = out + N * nu * kap * kap
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            d = q[i] - q[j]
            if form == "compact":
                zc = a2[i] * Ax[j] - a2[j] * Ax[i] + nu * (Ax[i] - Ax[j])
            else:
                ax_i = alpha[i] * Ax[i] / (2 * a2[i])
                ax_j = alpha[j] * Ax[j] / (2 * a2[j])
                zc = alpha[i] * ax_j - alpha[j] * ax_i + nu * (ax_i - ax_j)
            out = out + k / 2 * zc * el.zeta_w(d, m)
            w = a2[i] ** 2 * a2[j] + a2[i] * a2[j] ** 2 - nu * (a2[i] - a2[j]) ** 2
            out = out + w * el.wp(d, m) / 2
    return out


def cm_field_hamiltonian(cfg: FieldConfig, params: ModelParams, nodes: int = 64, form: str = "compact") -> complex:
    xs = 2 * np.pi * np.arange(nodes) / nodes
    total = 0.0
    for x in xs:
        fp = eval_fieldpoint(cfg, x, shifts=(0,), params=params)
        total += complex(cm_field_density(fp, params, form))
    return 2 * np.pi * total / nodes


def _time_lift_cm(fp: FieldPoint, eom: dict) -> FieldPoint:
    qj = list(fp.jets[0][0])
    pj = list(fp.jets[0][1])
    qj[0] = _dual_vec(qj[0], eom["qdot"])
    qj[1] = _dual_vec(qj[1], eom["qdot_x"])
    qj[2] = _dual_vec(qj[2], eom["qdot_xx"])
    pj[0] = _dual_vec(pj[0], eom["pdot"])
    return FieldPoint(fp.x, fp.eps, {0: (qj, pj)}, fp.cfg)


def _dual_vec(values, tangents) -> np.ndarray:
    out = np.empty(len(values), dtype=object)
    for i, (v, t) in enumerate(zip(values, tangents)):
        out[i] = dk.Dual(complex(v), complex(t))
    return out


def _tangent(mat) -> np.ndarray:
    return np.array([[v.tangent if isinstance(v, dk.Dual) else 0.0 for v in row] for row in mat], dtype=complex)


def _value(mat) -> np.ndarray:
    return np.array([[dk.base_value(v) for v in row] for row in mat], dtype=complex)


def cm_zs_terms(cfg: FieldConfig, x: float, z, params: ModelParams, pdot_form: str = "variational") -> dict:
    """``dU/dt`` (chain rule), ``k dV/dx`` (duals in x) and ``[U, V]``."""
    fp = eval_fieldpoint(cfg, x, shifts=(0,), params=params)
    eom = cm_field_eom(fp, params, pdot_form)
    u_t = _tangent(cm_field_U(_time_lift_cm(fp, eom), z, params))
    fpx = eval_fieldpoint(cfg, dk.Dual(complex(x), 1.0), shifts=(0,), check=False)
    vmat = cm_field_V(fpx, z, params)
    v_x = _tangent(vmat)
    u = np.asarray(cm_field_U(fp, z, params), dtype=complex)
    v = _value(vmat)
    return {"U_t": u_t, "kV_x": params.k * v_x, "comm": u @ v - v @ u, "U": u, "V": v}


def cm_zs_residual(cfg: FieldConfig, x: float, z, params: ModelParams, pdot_form: str = "variational",
                   scaled: bool = False) -> float:
    t = cm_zs_terms(cfg, x, z, params, pdot_form)
    res = float(np.max(np.abs(t["U_t"] - t["kV_x"] + t["comm"])))
    if scaled:
        return res / max(1.0, *(float(np.max(np.abs(t[key]))) for key in ("U_t", "kV_x", "comm")))
    return res


def cm_density_gap(cfg: FieldConfig, x: float, params: ModelParams) -> float:
    """Relative gap between the expanded and compact densities at one point."""
    fp = eval_fieldpoint(cfg, x, shifts=(0,), params=params)
    a = complex(cm_field_density(fp, params, "expanded"))
    b = complex(cm_field_density(fp, params, "compact"))
    return abs(a - b) / max(1.0, abs(a), abs(b))


def k0_reduction(state, z, params: ModelParams) -> dict:
    """At ``k = 0`` with constant fields: U against the CM Lax matrix and the density against ``H^CM``.

    The field momentum plays the role of ``tilde p``, so U is built on the
    constant field ``(q, tilde p)``.  The density is compared with
    ``-2 nu H^CM + (nu/N)(sum p)^2``; the second term is the total momentum
    Casimir.
    """
    p0 = params.replace(k=0.0)
    n = len(state.q)
    fp_u = eval_fieldpoint(constant_field(state.q, tilde_p(state, p0)), 0.0, shifts=(0,), params=p0)
    u = np.asarray(cm_field_U(fp_u, z, p0), dtype=complex)
    lax = np.asarray(lm.cm_lax(state, z, p0), dtype=complex)
    fp = eval_fieldpoint(constant_field(state.q, state.p), 0.0, shifts=(0,), params=p0)
    dens = complex(cm_field_density(fp, p0, "compact"))
    target = complex(-2 * p0.nu * lm.cm_hamiltonian(state, p0) + p0.nu / n * complex(np.sum(state.p)) ** 2)
    return {
        "U_vs_lax": float(np.max(np.abs(u - lax))) / max(1.0, float(np.max(np.abs(lax)))),
        "density_vs_hamiltonian": abs(dens - target) / max(1.0, abs(target)),
    }


# ---------------------------------------------------------------------------
# Ruijsenaars-Schneider field theory


def _rs_eps(fp: FieldPoint, eps):
    return fp.eps if eps is None else eps


def rs_field_weights(fp: FieldPoint, params: ModelParams, s: int = 0) -> list:
    """``b_j(x)`` with ``h(x) = sum_j b_j(x)``; ``s`` shifts the point to ``x + s eps``."""
    m = params.modulus
    eps, nu = fp.eps, params.nu
    q, qm, p = fp.qs(s), fp.qs(s - 1), fp.ps(s)
    N = fp.N
    th = el.theta(nu * eps, m)
    out = []
    for j in range(N):
        num = 1.0
        for a in range(N):
            num = num * el.theta(q[j] - qm[a] + nu * eps, m)
        den = th
        for a in range(N):
            if a != j:
                den = den * el.theta(q[j] - q[a], m)
        out.append(num / den * dk.exp(-eps * p[j]))
    return out


def rs_field_h(fp: FieldPoint, params: ModelParams, s: int = 0):
    acc = 0.0
    for v in rs_field_weights(fp, params, s):
        acc = acc + v
    return acc


def rs_field_density(fp: FieldPoint, params: ModelParams):
    return -dk.log(rs_field_h(fp, params)) / fp.eps


def rs_field_U(fp: FieldPoint, z, params: ModelParams, s: int = 0) -> np.ndarray:
    m = params.modulus
    eps, nu = fp.eps, params.nu
    b = rs_field_weights(fp, params, s)
    q, qm = fp.qs(s), fp.qs(s - 1)
    N = fp.N
    return as_matrix([[el.kronecker_phi(z, qm[i] - q[j] - nu * eps, m) * b[j] for j in range(N)] for i in range(N)])


def rs_field_velocity(fp: FieldPoint, params: ModelParams, s: int = 0) -> list:
    """``qdot_i = b_i / h``, the variational derivative of the field Hamiltonian."""
    b = rs_field_weights(fp, params, s)
    h = 0.0
    for v in b:
        h = h + v
    if abs(dk.base_value(h)) < 1e-14:
        raise FieldGuardError(f"h vanishes at x = {fp.x}")
    return [v / h for v in b]


def rs_field_eom(fp: FieldPoint, params: ModelParams, s: int = 0) -> dict:
    """``qdot`` at ``x + s eps`` and ``x + (s +- 1) eps``, and ``pdot`` at ``x + s eps``."""
    m = params.modulus
    eps, nu = fp.eps, params.nu
    qd = rs_field_velocity(fp, params, s)
    qd_next = rs_field_velocity(fp, params, s + 1)
    q, qm, qn = fp.qs(s), fp.qs(s - 1), fp.qs(s + 1)
    N = fp.N
    pd = []
    for i in range(N):
        acc = 0.0
        for l in range(N):
            acc = acc + qd[i] * el.e1(q[i] - qm[l] + nu * eps, m)
            acc = acc + qd_next[l] * el.e1(q[i] - qn[l] - nu * eps, m)
            if l != i:
                acc = acc - (qd[i] + qd[l]) * el.e1(q[i] - q[l], m)
        pd.append(acc / eps)
    out = {"qdot": qd, "qdot_next": qd_next, "pdot": pd}
    if (s - 1) in fp.jets and (s - 2) in fp.jets:
        out["qdot_prev"] = rs_field_velocity(fp, params, s - 1)
    return out


def rs_field_qdot_printed(fp: FieldPoint, params: ModelParams) -> list:
    """The velocity as first printed: ``-(eps/h) e^{-eps p_i} prod theta(...) / prod theta(...)``."""
    th = el.theta(params.nu * fp.eps, params.modulus)
    h = rs_field_h(fp, params)
    return [-fp.eps * th * v / h for v in rs_field_weights(fp, params)]


def rs_field_V(fp: FieldPoint, z, params: ModelParams, s: int = 0) -> np.ndarray:
    m = params.modulus
    eps, nu = fp.eps, params.nu
    qd = rs_field_velocity(fp, params, s)
    qd_next = rs_field_velocity(fp, params, s + 1)
    q, qn = fp.qs(s), fp.qs(s + 1)
    N = fp.N
    ez = el.e1(z, m)
    rows = []
    for i in range(N):
        row = []
        for j in range(N):
            if i != j:
                row.append(-el.kronecker_phi(z, q[i] - q[j], m) * qd[j])
            else:
                acc = -ez * qd[i]
                for l in range(N):
                    if l != i:
                        acc = acc + qd[l] * el.e1(q[i] - q[l], m)
                    acc = acc - qd_next[l] * el.e1(q[i] - qn[l] - nu * eps, m)
                row.append(acc)
        rows.append(row)
    return as_matrix(rows)


def rs_zs_terms(cfg: FieldConfig, x: float, z, eps, params: ModelParams) -> dict:
    fp = eval_fieldpoint(cfg, x, eps, shifts=(-2, -1, 0, 1), params=params)
    check_fieldpoint(fp, params, relativistic=True)
    e0 = rs_field_eom(fp, params, 0)
    qd_prev = rs_field_velocity(fp, params, -1)
    # lift q(x), q(x - eps), p(x) with their time derivatives
    jets = {s: (list(v[0]), list(v[1])) for s, v in fp.jets.items()}
    jets[0][0][0] = _dual_vec(fp.qs(0), e0["qdot"])
    jets[-1][0][0] = _dual_vec(fp.qs(-1), qd_prev)
    jets[0][1][0] = _dual_vec(fp.ps(0), e0["pdot"])
    lifted = FieldPoint(fp.x, fp.eps, jets, cfg)
    u_t = _tangent(rs_field_U(lifted, z, params))
    u = np.asarray(rs_field_U(fp, z, params), dtype=complex)
    v = np.asarray(rs_field_V(fp, z, params), dtype=complex)
    vm = np.asarray(rs_field_V(fp, z, params, s=-1), dtype=complex)
    return {"U_t": u_t, "UV": u @ v, "VmU": vm @ u, "U": u}


def rs_zs_residual(cfg: FieldConfig, x: float, z, eps, params: ModelParams, scaled: bool = False) -> float:
    t = rs_zs_terms(cfg, x, z, eps, params)
    res = float(np.max(np.abs(t["U_t"] - t["UV"] + t["VmU"])))
    if scaled:
        return res / max(1.0, *(float(np.max(np.abs(t[key]))) for key in ("U_t", "UV", "VmU")))
    return res


__all__ = [
    "FieldConfig",
    "FieldPoint",
    "FieldGuardError",
    "sample_field",
    "constant_field",
    "euler_step",
    "eval_fieldpoint",
    "check_fieldpoint",
    "alpha_kappa",
    "cm_field_U",
    "cm_field_V",
    "cm_field_eom",
    "cm_field_density",
    "cm_field_hamiltonian",
    "cm_zs_residual",
    "cm_density_gap",
    "k0_reduction",
    "rs_field_U",
    "rs_field_V",
    "rs_field_eom",
    "rs_field_h",
    "rs_zs_residual",
]


# ---------------------------------------------------------------------------
# eps -> 0 limit of the RS field theory (lands on the CM field at k = 1)


def limit_alpha2(fp: FieldPoint, params: ModelParams) -> list:
    """``alpha_i^2 = q_{i,x} + nu``, the weight limit ``b_j -> alpha_j^2 / nu``."""
    return [fp.qs(0, 1)[i] + params.nu for i in range(fp.N)]


def field_tilde_p(fp: FieldPoint, params: ModelParams) -> list:
    """``p_i - sum_{m != i} alpha_m^2 E1(q_i - q_m)``."""
    m = params.modulus
    q, p = fp.qs(0), fp.ps(0)
    A = limit_alpha2(fp, params)
    out = []
    for i in range(fp.N):
        acc = p[i]
        for j in range(fp.N):
            if j != i:
                acc = acc - A[j] * el.e1(q[i] - q[j], m)
        out.append(acc)
    return out


def cm_limit_U(fp: FieldPoint, z, params: ModelParams) -> np.ndarray:
    """``nu`` times the eps^0 coefficient of the RS field U-matrix.

    This is the CM U-matrix at ``k = 1`` with diagonal momentum
    ``tilde p_i + k alpha_{i,x} / alpha_i``, so the ``alpha_x`` term cancels.
    """
    m = params.modulus
    q = fp.qs(0)
    A = limit_alpha2(fp, params)
    pt = field_tilde_p(fp, params)
    ez = el.e1(z, m)
    N = fp.N
    return as_matrix(
        [[pt[i] + A[i] * ez if i == j else el.kronecker_phi(z, q[i] - q[j], m) * A[j] for j in range(N)]
         for i in range(N)]
    )
