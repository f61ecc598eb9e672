"""Phase-space types, seeded samplers and canonical momentum maps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from rslab import elliptic as el
from rslab.diffkit import base_value, log, sqrt

WEIGHT_VARIANTS = ("standard", "plus-eta", "square-root")


class SamplerExhaustedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelParams:
    tau: complex = 1j
    eta: complex = 0.23 + 0.11j
    c: complex = 0.9 - 0.35j
    nu: complex = 0.7 + 0.25j
    N: int = 2
    n: int = 2
    k: complex = 1.0
    guard: float = 1e-3

    def __post_init__(self):
        for name in ("tau", "eta", "c", "nu", "k"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if self.N < 1 or self.n < 1:
            raise ValueError("N and n must be positive")
        if self.tau.imag <= 0:
            raise el.InvalidModulusError(f"Im(tau) must be positive, got {self.tau}")

    @cached_property
    def modulus(self) -> el.Modulus:
        return el.Modulus(self.tau, self.guard)

    def replace(self, **kw) -> "ModelParams":
        d = {f: getattr(self, f) for f in ("tau", "eta", "c", "nu", "N", "n", "k", "guard")}
        d.update(kw)
        return ModelParams(**d)

    def to_json(self) -> dict:
        out = {}
        for f in ("tau", "eta", "c", "nu", "k"):
            v = getattr(self, f)
            out[f] = [v.real, v.imag]
        out.update(N=self.N, n=self.n, guard=self.guard)
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ModelParams":
        kw = dict(d)
        for f in ("tau", "eta", "c", "nu", "k"):
            if f in kw and isinstance(kw[f], (list, tuple)):
                kw[f] = complex(*kw[f])
        return cls(**kw)


@dataclass
class RSState:
    p: np.ndarray
    q: np.ndarray

    @property
    def N(self) -> int:
        return len(self.p)


@dataclass
class ChainState:
    """``p[a-1], q[a-1]`` hold site ``a``; site indices are taken modulo ``n``."""

    p: np.ndarray
    q: np.ndarray

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def N(self) -> int:
        return self.p.shape[1]

    def qs(self, a: int):
        return self.q[(a - 1) % self.n]

    def ps(self, a: int):
        return self.p[(a - 1) % self.n]


@dataclass(frozen=True)
class ShiftedWeights:
    variant: str
    values: tuple = field(default=())

    def __post_init__(self):
        if self.variant not in WEIGHT_VARIANTS:
            raise ValueError(f"unknown weight variant {self.variant!r}")

    def shift_constant(self, params: ModelParams) -> complex:
        return {"standard": 0.0, "plus-eta": params.c, "square-root": params.c / 2}[self.variant]


# ---------------------------------------------------------------------------
# sampling


def _cell_points(rng, tau: complex, count: int) -> np.ndarray:
    a = rng.uniform(-0.5, 0.5, size=count)
    b = rng.uniform(-0.5, 0.5, size=count)
    return a + b * tau


def _disk(rng, count: int) -> np.ndarray:
    r = np.sqrt(rng.uniform(0, 1, size=count))
    t = rng.uniform(0, 2 * np.pi, size=count)
    return r * np.exp(1j * t)


def _ok(diff, m: el.Modulus, guard: float) -> bool:
    return el.lattice_distance(complex(diff), m) >= guard


def rs_separations_ok(q, params: ModelParams, guard: float) -> bool:
    m = params.modulus
    eta = params.eta
    n = len(q)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = q[i] - q[j]
            if not (_ok(d, m, guard) and _ok(d + eta, m, guard) and _ok(d - eta, m, guard)):
                return False
    return True


def chain_separations_ok(q, params: ModelParams, guard: float) -> bool:
    n = q.shape[0]
    if n == 1:
        return rs_separations_ok(q[0], params, guard)
    m = params.modulus
    eta = params.eta
    for a in range(n):
        if not rs_separations_ok(q[a], params, guard):
            return False
        prev = q[a - 1]
        for i in range(q.shape[1]):
            for j in range(q.shape[1]):
                d = prev[i] - q[a][j]
                if not (_ok(d, m, guard) and _ok(d + eta, m, guard) and _ok(d - eta, m, guard)):
                    return False
    return True


def sample_rs(seed: int, params: ModelParams, guard: float = 0.05) -> RSState:
    if guard <= 0:
        raise ValueError("guard must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        q = _cell_points(rng, params.tau, params.N)
        p = _disk(rng, params.N)
        if rs_separations_ok(q, params, guard):
            return RSState(p=p, q=q)
    raise SamplerExhaustedError(f"no guarded RS state after 1000 draws (seed {seed})")


def sample_chain(seed: int, params: ModelParams, guard: float = 0.05) -> ChainState:
    if guard <= 0:
        raise ValueError("guard must be positive")
    rng = np.random.default_rng(seed)
    shape = (params.n, params.N)
    for _ in range(1000):
        q = _cell_points(rng, params.tau, params.n * params.N).reshape(shape)
        p = _disk(rng, params.n * params.N).reshape(shape)
        if chain_separations_ok(q, params, guard):
            return ChainState(p=p, q=q)
    raise SamplerExhaustedError(f"no guarded chain state after 1000 draws (seed {seed})")


def sample_spectral(rng, params: ModelParams, count: int, avoid=(), guard: float = 0.05) -> list:
    """Spectral points in the cell, guarded against the lattice and every shift in ``avoid``."""
    m = params.modulus
    out = []
    for _ in range(1000):
        z = complex(_cell_points(rng, params.tau, 1)[0])
        if not _ok(z, m, guard):
            continue
        if any(not _ok(z + s, m, guard) for s in avoid):
            continue
        if any(not _ok(z - w, m, guard) for w in out):
            continue
        out.append(z)
        if len(out) == count:
            return out
    raise SamplerExhaustedError("spectral sampler exhausted after 1000 draws")


# ---------------------------------------------------------------------------
# canonical maps


def shift_log(q, params: ModelParams) -> list:
    """``log prod_{k != j} theta(q_jk + eta) / theta(q_jk - eta)`` per particle."""
    m = params.modulus
    eta = params.eta
    out = []
    for j in range(len(q)):
        acc = 1.0
        for k in range(len(q)):
            if k != j:
                acc = acc * el.theta(q[j] - q[k] + eta, m) / el.theta(q[j] - q[k] - eta, m)
        out.append(log(acc) if len(q) > 1 else 0.0)
    return out


def canonical_shift(state: RSState, c1, params: ModelParams) -> RSState:
    """``p_j -> p_j + c1 log prod_k theta(q_jk+eta)/theta(q_jk-eta)``; positions unchanged."""
    if c1 == 0:
        return RSState(p=np.array(state.p, copy=True), q=np.array(state.q, copy=True))
    sh = shift_log(state.q, params)
    p = np.array([state.p[j] + c1 * sh[j] for j in range(len(sh))])
    return RSState(p=p, q=np.array(state.q, copy=True))


def tilde_p(state: RSState, params: ModelParams, nu=None) -> np.ndarray:
    """``p_j - nu sum_{k != j} E1(q_j - q_k)``."""
    nu = params.nu if nu is None else nu
    m = params.modulus
    q = state.q
    out = []
    for j in range(len(q)):
        acc = state.p[j]
        for k in range(len(q)):
            if k != j:
                acc = acc - nu * el.e1(q[j] - q[k], m)
        out.append(acc)
    return np.array(out)


def sqrt_factor(x, params: ModelParams):
    """Principal ``(wp(eta) - wp(x))^{1/2}`` used by the square-root weights."""
    m = params.modulus
    return sqrt(el.wp(params.eta, m) - el.wp(x, m))


# ---------------------------------------------------------------------------
# JSON


def _pairs(a) -> list:
    arr = np.asarray([complex(base_value(v)) for v in np.ravel(a)])
    return [[float(v.real), float(v.imag)] for v in arr]


def state_to_json(state, params: ModelParams, seed=None) -> str:
    kind = "chain" if isinstance(state, ChainState) else "rs"
    p = np.asarray(state.p)
    doc = {
        "kind": kind,
        "shape": list(p.shape),
        "p": _pairs(state.p),
        "q": _pairs(state.q),
        "params": params.to_json(),
        "seed": seed,
    }
    return json.dumps(doc, sort_keys=True)


def state_from_json(text: str):
    doc = json.loads(text)
    shape = tuple(doc["shape"])
    p = np.array([complex(*v) for v in doc["p"]]).reshape(shape)
    q = np.array([complex(*v) for v in doc["q"]]).reshape(shape)
    params = ModelParams.from_json(doc["params"])
    state = ChainState(p=p, q=q) if doc["kind"] == "chain" else RSState(p=p, q=q)
    return state, params, doc.get("seed")


__all__ = [
    "ModelParams",
    "RSState",
    "ChainState",
    "ShiftedWeights",
    "WEIGHT_VARIANTS",
    "SamplerExhaustedError",
    "sample_rs",
    "sample_chain",
    "sample_spectral",
    "canonical_shift",
    "tilde_p",
    "state_to_json",
    "state_from_json",
]
