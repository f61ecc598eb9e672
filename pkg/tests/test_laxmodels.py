from __future__ import annotations

import cmath

import numpy as np
import pytest

from rslab import contour
from rslab import diffkit as dk
from rslab import elliptic as el
from rslab import laxmodels as lm
from rslab.states import ChainState, ModelParams, RSState, WEIGHT_VARIANTS, sample_chain, sample_rs, tilde_p

Z = 0.21 + 0.13j


def test_single_particle_rs():
    params = ModelParams(N=1)
    s = RSState(p=np.array([0.3 - 0.2j]), q=np.array([0.1 + 0.05j]))
    b = lm.rs_b(s, params)
    assert abs(b[0] - cmath.exp(s.p[0] / params.c)) < 1e-15
    L = lm.rs_lax(s, Z, params)
    assert abs(L[0, 0] - el.kronecker_phi(Z, params.eta, params.modulus) * b[0]) < 1e-14
    M = lm.rs_M(s, Z, params)
    m = params.modulus
    assert abs(M[0, 0] + b[0] * (el.e1(Z, m) + el.e1(params.eta, m))) < 1e-13
    qd, pd = lm.rs_eom(s, params)
    assert pd[0] == 0


@pytest.mark.parametrize("variant", WEIGHT_VARIANTS)
def test_rs_lax_structure(variant):
    params = ModelParams(N=3)
    s = sample_rs(2, params)
    L = lm.rs_lax(s, Z, params, variant)
    b = lm.rs_b(s, params, variant)
    phi_eta = el.kronecker_phi(Z, params.eta, params.modulus)
    np.testing.assert_allclose(np.diag(L), phi_eta * b, rtol=1e-13)
    assert abs(np.sum(b) - np.trace(L) / phi_eta) < 1e-12


def test_rs_lax_residue_is_weight():
    params = ModelParams(N=3)
    s = sample_rs(3, params)
    res = lm.rs_lax_residue(s, params)
    b = lm.rs_b(s, params)
    assert np.max(np.abs(res - np.tile(b, (3, 1)))) < 1e-8


def test_rs_M_offdiagonal():
    params = ModelParams(N=2)
    s = sample_rs(1, params)
    M = lm.rs_M(s, Z, params)
    b = lm.rs_b(s, params)
    assert abs(M[0, 1] + el.kronecker_phi(Z, s.q[0] - s.q[1], params.modulus) * b[1]) < 1e-13


def test_rs_equations_of_motion():
    params = ModelParams(N=3)
    s = sample_rs(5, params)
    H = lambda x: lm.rs_hamiltonian(x, params)  # noqa: E731
    qd, pd = lm.rs_eom(s, params)
    for j in range(3):
        assert abs(dk.poisson_bracket(H, lambda x, j=j: x.q[j], s) - qd[j]) < 1e-11
        assert abs(dk.poisson_bracket(H, lambda x, j=j: x.p[j], s) - pd[j]) < 1e-10


def test_rs_newton_form():
    params = ModelParams(N=3)
    for seed in range(3):
        assert lm.rs_newton_residual(sample_rs(seed, params), params) < 1e-9


def test_cm_lax():
    p0 = ModelParams(N=3, nu=0.0)
    s = sample_rs(1, p0)
    np.testing.assert_allclose(lm.cm_lax(s, Z, p0), np.diag(s.p), atol=1e-15)
    params = ModelParams(N=3)
    L = lm.cm_lax(s, Z, params)
    expected = np.sum(tilde_p(s, params)) + 3 * params.nu * el.e1(Z, params.modulus)
    assert abs(np.trace(L) - expected) < 1e-12


def test_cm_equations_of_motion():
    params = ModelParams(N=3)
    s = sample_rs(2, params)
    qd, pd = lm.cm_eom(s, params)
    H = lambda x: lm.cm_hamiltonian(x, params)  # noqa: E731
    for j in range(3):
        assert abs(dk.poisson_bracket(H, lambda x, j=j: x.q[j], s) - qd[j]) < 1e-11
        assert abs(dk.poisson_bracket(H, lambda x, j=j: x.p[j], s) - pd[j]) < 1e-9


def test_chain_single_site_is_rs():
    params = ModelParams(N=3, n=1)
    rs = sample_rs(4, params)
    ch = ChainState(p=rs.p.reshape(1, 3), q=rs.q.reshape(1, 3))
    np.testing.assert_allclose(lm.chain_lax(ch, 1, Z, params), lm.rs_lax(rs, Z, params), rtol=1e-12)


def test_monodromy_scalar_product():
    params = ModelParams(N=1, n=2)
    s = sample_chain(0, params)
    T = lm.chain_monodromy(s, Z, params)
    prod = lm.chain_lax(s, 1, Z, params) @ lm.chain_lax(s, 2, Z, params)
    assert abs(T[0, 0] - prod[0, 0]) < 1e-14


@pytest.mark.parametrize("n", [2, 3])
def test_monodromy_residue_gives_hamiltonian(n):
    params = ModelParams(N=2, n=n)
    s = sample_chain(1, params)
    lhs = lm.chain_hamiltonian_residue(s, params)
    rhs = cmath.exp(lm.chain_hamiltonian(s, params) / params.c)
    assert abs(lhs - rhs) < 1e-8 * max(1, abs(rhs))


def test_chain_velocity_closed_form():
    params = ModelParams(N=2, n=3)
    s = sample_chain(2, params)
    H = lambda x: lm.chain_hamiltonian(x, params)  # noqa: E731
    v = lm.chain_velocity(s, params)
    for a in range(3):
        for j in range(2):
            br = dk.poisson_bracket(H, lambda x, a=a, j=j: x.q[a, j], s)
            assert abs(br - v[a, j]) < 1e-10


def test_chain_newton_form():
    params = ModelParams(N=2, n=3)
    assert lm.chain_newton_residual(sample_chain(3, params), params) < 1e-8


def test_degenerate_weights_rejected():
    params = ModelParams(N=1, n=1)
    s = ChainState(p=np.array([[-1e6 + 0j]]), q=np.array([[0.1 + 0j]]))
    with pytest.raises(lm.DegenerateWeightError):
        lm.chain_hamiltonian(s, params.replace(c=1.0))
