"""RK4 integration of the RS, CM and chain flows, with conservation checks.

Phase space is complex and the flows are integrated as holomorphic ODEs.  The
guard is checked after every step and integration stops with
:class:`GuardViolationError` when a pair of particles gets too close to a pole.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from rslab import diffkit as dk
from rslab import elliptic as el
from rslab import laxmodels as lm
from rslab.states import ChainState, ModelParams, RSState

MODELS = ("RS", "CM", "chain")
SCHEMES = ("rk4", "rk4-adaptive")


class GuardViolationError(RuntimeError):
    def __init__(self, time: float, pair, message: str = ""):
        self.time = time
        self.pair = pair
        super().__init__(message or f"guard violated at t={time:.6g} by pair {pair}")


class StepUnderflowError(RuntimeError):
    pass


class _StageBlowup(Exception):
    """An RK4 stage evaluated the vector field outside its domain."""


@dataclass
class Trajectory:
    model: str
    times: list
    states: list
    scheme: str
    dt: float
    rejected: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)


# ---------------------------------------------------------------------------
# vector fields


def _pack(state) -> np.ndarray:
    return np.concatenate([np.ravel(np.asarray(state.q, dtype=complex)), np.ravel(np.asarray(state.p, dtype=complex))])


def _unpack(model: str, y: np.ndarray, shape) -> RSState | ChainState:
    half = y.size // 2
    q, p = y[:half].reshape(shape), y[half:].reshape(shape)
    return ChainState(p=p, q=q) if model == "chain" else RSState(p=p, q=q)


def vector_field(model: str, params: ModelParams, variant: str = "standard"):
    """``(qdot, pdot)`` of the model as a function of a state."""
    if model == "RS":
        return lambda s: lm.rs_eom(s, params, variant)
    if model == "CM":
        return lambda s: lm.cm_eom(s, params)
    if model == "chain":
        return lambda s: lm.chain_eom(s, params)
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def hamiltonian(model: str, params: ModelParams, variant: str = "standard"):
    if model == "RS":
        return lambda s: lm.rs_hamiltonian(s, params, variant)
    if model == "CM":
        return lambda s: lm.cm_hamiltonian(s, params)
    if model == "chain":
        return lambda s: lm.chain_hamiltonian(s, params)
    raise ValueError(f"unknown model {model!r}")


def first_bad_pair(model: str, state, params: ModelParams, guard: float, h_floor: float = 1e-3):
    """``None`` if ``state`` keeps ``guard`` away from the poles of the flow, else the offending pair.

    The poles are same-site coincidences ``q_i - q_j`` on the lattice and, for
    the chain, vanishing ``h``.  Shifted differences ``q_i - q_j +- eta`` are
    zeros of the weights, not poles, and are not monitored.
    """
    m = params.modulus
    if model == "chain":
        for a in range(state.n):
            bad = _scan_pairs(state.q[a], m, guard)
            if bad is not None:
                return (a + 1,) + bad
        for a in range(1, state.n + 1):
            if abs(complex(lm.chain_h(state, a, params))) < h_floor:
                return ("h", a)
        return None
    return _scan_pairs(np.asarray(state.q), m, guard)


def _scan_pairs(q, m, guard):
    for i in range(len(q)):
        for j in range(i):
            if el.lattice_distance(complex(q[i] - q[j]), m) < guard:
                return (j, i)
    return None


# ---------------------------------------------------------------------------
# integration


def _rk4_step(f, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(model: str, state0, t_end: float, dt: float, params: ModelParams, scheme: str = "rk4",
              variant: str = "standard", guard: float | None = None, atol: float = 1e-12,
              min_dt: float = 1e-9) -> Trajectory:
    """Integrate from ``t = 0`` to ``t_end`` (negative ``t_end`` runs backwards)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    guard = params.guard if guard is None else guard
    rhs = vector_field(model, params, variant)
    shape = np.shape(state0.q)

    def f(y):
        try:
            qd, pd = rhs(_unpack(model, y, shape))
        except (OverflowError, ZeroDivisionError) as exc:
            raise _StageBlowup from exc
        out = np.concatenate([np.ravel(np.asarray(qd, dtype=complex)), np.ravel(np.asarray(pd, dtype=complex))])
        if not np.all(np.isfinite(out)):
            raise _StageBlowup
        return out

    bad = first_bad_pair(model, state0, params, guard)
    if bad is not None:
        raise GuardViolationError(0.0, bad, f"initial state violates the guard at pair {bad}")
    direction = 1.0 if t_end >= 0 else -1.0
    total = abs(t_end)
    y = _pack(state0)
    t = 0.0
    times, states = [0.0], [state0]
    rejected = 0
    h = dt
    while total - t > 1e-14 * max(1.0, total):
        h = min(h, total - t)
        if scheme == "rk4":
            try:
                y_new = _rk4_step(f, y, direction * h)
            except _StageBlowup:
                raise GuardViolationError(direction * t, None, f"RK4 stage left the domain at t={direction * t:.6g}")
        else:
            try:
                full = _rk4_step(f, y, direction * h)
                half = _rk4_step(f, _rk4_step(f, y, direction * h / 2), direction * h / 2)
                err = float(np.max(np.abs(full - half))) / 15.0
            except _StageBlowup:
                err = np.inf
            if err > atol * max(1.0, float(np.max(np.abs(y)))):
                rejected += 1
                h /= 2
                if h < min_dt:
                    raise StepUnderflowError(f"step fell below {min_dt} at t={direction * t:.6g}")
                continue
            y_new = half + (half - full) / 15.0
        t += h
        y = y_new
        st = _unpack(model, y, shape)
        bad = first_bad_pair(model, st, params, guard)
        if bad is not None:
            raise GuardViolationError(direction * t, bad)
        times.append(direction * t)
        states.append(st)
        if scheme == "rk4-adaptive" and h < dt:
            h = min(dt, 2 * h)
    return Trajectory(model, times, states, scheme, dt, rejected)


# ---------------------------------------------------------------------------
# Lax equation and conservation


def lax_matrix(model: str, params: ModelParams, variant: str = "standard"):
    """Spectral matrix whose invariants the flow preserves: ``L(z)`` or the monodromy ``T(z)``."""
    if model == "RS":
        return lambda s, z: lm.rs_lax(s, z, params, variant)
    if model == "CM":
        return lambda s, z: lm.cm_lax(s, z, params, tilde=False)
    if model == "chain":
        return lambda s, z: lm.chain_monodromy(s, z, params)
    raise ValueError(f"unknown model {model!r}")


def lax_residual_rs(state: RSState, z, params: ModelParams, variant: str = "standard") -> float:
    """``max |{H, L(z)} - [L(z), M(z)]|`` with the bracket from the Poisson engine."""
    H = lambda s: lm.rs_hamiltonian(s, params, variant)  # noqa: E731
    n = len(state.q)
    dot = np.array([[dk.poisson_bracket(H, lambda s, i=i, j=j: lm.rs_lax(s, z, params, variant)[i, j], state)
                     for j in range(n)] for i in range(n)])
    L = np.asarray(lm.rs_lax(state, z, params, variant), dtype=complex)
    M = np.asarray(lm.rs_M(state, z, params, variant), dtype=complex)
    return float(np.max(np.abs(dot - (L @ M - M @ L))))


def lax_scale_rs(state: RSState, z, params: ModelParams, variant: str = "standard") -> float:
    L = np.asarray(lm.rs_lax(state, z, params, variant), dtype=complex)
    M = np.asarray(lm.rs_M(state, z, params, variant), dtype=complex)
    return float(max(np.max(np.abs(L @ M)), np.max(np.abs(M @ L))))


def trace_power(mat: np.ndarray, k: int) -> complex:
    return complex(np.trace(np.linalg.matrix_power(np.asarray(mat, dtype=complex), k)))


def invariants(model: str, state, z_samples, k_list, params: ModelParams, variant: str = "standard") -> dict:
    """``tr X^k(z)``, characteristic polynomial coefficients of ``X(z)`` and ``H``.

    For the chain ``H`` is replaced by ``exp(H/c) = prod_a h_a``, which is free of
    the branch jumps of the logarithm.
    """
    lax = lax_matrix(model, params, variant)
    if model == "chain":
        prod = 1.0 + 0j
        for a in range(1, state.n + 1):
            prod *= complex(dk.base_value(lm.chain_h(state, a, params)))
        out = {"H": prod}
    else:
        out = {"H": complex(dk.base_value(hamiltonian(model, params, variant)(state)))}
    for zi, z in enumerate(z_samples):
        X = np.asarray(lax(state, z), dtype=complex)
        for k in k_list:
            out[f"tr^{k}@z{zi}"] = trace_power(X, k)
        for ci, c in enumerate(np.poly(X)[1:], start=1):
            out[f"charpoly{ci}@z{zi}"] = complex(c)
    return out


def _rel_drift(series: list) -> float:
    v0 = series[0]
    return max(abs(v - v0) for v in series) / max(1.0, abs(v0))


def conservation_report(model: str, traj: Trajectory, z_samples, k_list, params: ModelParams,
                        variant: str = "standard", stride: int = 1) -> dict:
    """Relative drift of every invariant over the trajectory (every ``stride``-th state and the last)."""
    idx = list(range(0, len(traj), stride))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)
    rows = [invariants(model, traj.states[i], z_samples, k_list, params, variant) for i in idx]
    keys = list(rows[0])
    series = {key: [r[key] for r in rows] for key in keys}
    drift = {key: _rel_drift(v) for key, v in series.items()}
    traces = [v for key, v in drift.items() if key.startswith("tr^")]
    charpoly = [v for key, v in drift.items() if key.startswith("charpoly")]
    return {
        "model": model,
        "times": [traj.times[i] for i in idx],
        "series": series,
        "drift": drift,
        "max_trace_drift": max(traces),
        "max_charpoly_drift": max(charpoly),
        "hamiltonian_drift": drift["H"],
        "max_drift": max(drift.values()),
    }


def drift_csv(report: dict) -> str:
    """Long format: ``time, invariant_id, value_re, value_im, drift``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "invariant_id", "value_re", "value_im", "drift"])
    for key, vals in report["series"].items():
        v0 = vals[0]
        for t, v in zip(report["times"], vals):
            w.writerow([repr(float(t)), key, repr(v.real), repr(v.imag), repr(abs(v - v0) / max(1.0, abs(v0)))])
    return buf.getvalue()


def order_ratio(model: str, state0, params: ModelParams, t_end: float = 0.5, dt: float = 2.5e-3,
                variant: str = "standard") -> dict:
    """Global RK4 error at ``dt`` over error at ``dt/2``, both against a ``dt/8`` reference."""
    ref = integrate(model, state0, t_end, dt / 8, params, variant=variant).states[-1]
    errs = []
    for h in (dt, dt / 2):
        end = integrate(model, state0, t_end, h, params, variant=variant).states[-1]
        errs.append(float(np.max(np.abs(_pack(end) - _pack(ref)))))
    # Richardson: e(h) - e(h/8) ~ C h^4 (1 - 1/4096), the reference error is negligible
    return {"dt": dt, "errors": errs, "ratio": errs[0] / errs[1]}
