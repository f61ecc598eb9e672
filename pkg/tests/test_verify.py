from __future__ import annotations

import json

import numpy as np
import pytest

from rslab import elliptic as el
from rslab import fieldkit as fk
from rslab import laxmodels as lm
from rslab import rmatrices as rm
from rslab import tensor as tn
from rslab import verify as vf
from rslab.states import ChainState, ModelParams, RSState, WEIGHT_VARIANTS, sample_chain, sample_rs

Z, W = 0.21 + 0.13j, -0.33 + 0.27j


def _grid(state, params, seed, size=2, chain=False):
    avoid = vf.chain_avoid(state, params) if chain else vf.rs_avoid(state, params)
    return vf.spectral_grid(np.random.default_rng(seed), params, size, avoid=avoid)


class TestReports:
    def test_pass_rule_and_json(self):
        p = ModelParams()
        r = vf.make_report("x", "anchor", p, 3, [(Z, W)], 2e-8, 10.0, 1e-8, extra=1 + 2j)
        assert r.passed and abs(r.scaled - 2e-9) < 1e-20
        d = json.loads(r.to_json())
        assert d["pass"] is True and d["details"]["extra"] == [1.0, 2.0]
        assert d["residuals"] == [2e-8]
        assert not vf.make_report("x", "a", p, 3, [], 1.0, 0.0, 1e-8).passed

    def test_merge_and_csv(self):
        p = ModelParams()
        a = vf.make_report("x", "a", p, 1, [(Z, W)], 1e-12, 1.0, 1e-8)
        b = vf.make_report("x", "a", p, 2, [(W, Z)], 1e-6, 1.0, 1e-8)
        m = vf.merge_reports([a, b])
        assert m.seed == 2 and m.details["count"] == 2 and m.details["all_pass"] is False
        lines = vf.reports_to_csv([a, b]).splitlines()
        assert lines[0] == "check_id,seed,residual_max,residual_scale,pass" and len(lines) == 3
        with pytest.raises(ValueError):
            vf.merge_reports([])


class TestRSQuadratic:
    def test_single_particle(self):
        p = ModelParams(N=1)
        s = RSState(p=np.array([0.3 - 0.1j]), q=np.array([0.2j]))
        assert vf.verify_rs_quadratic(s, Z, W, p).residual_max < 1e-12

    @pytest.mark.parametrize("variant", WEIGHT_VARIANTS)
    @pytest.mark.parametrize("N", [2, 3])
    def test_random_states(self, N, variant):
        p = ModelParams(N=N)
        s = sample_rs(N, p)
        for gi, (z, w) in enumerate(_grid(s, p, N)):
            r = vf.verify_rs_quadratic(s, z, w, p, variant, fd_oracle=gi == 0)
            assert r.passed, r.to_json()
            assert r.details["forms_agree"] < 1e-10 * max(1, r.residual_scale)
            if gi == 0:
                assert r.details["fd_vs_ad"] < 1e-6

    def test_sign_error_is_caught(self):
        # flipping the sign of c makes the residual O(1)
        p = ModelParams(N=2)
        s = sample_rs(1, p)
        sides = vf.rs_quadratic_sides(s, Z, W, p)
        assert tn.norm(-sides["lhs"] - sides["commutator"]) > 1e-3 * max(1, sides["scale"])


class TestTraceInvolution:
    def test_rs(self):
        p = ModelParams(N=2)
        s = sample_rs(3, p)
        assert vf.verify_trace_involution("RS", s, Z, W, 1, 1, p, tol=1e-10).passed

    def test_chain(self):
        p = ModelParams(N=2, n=2)
        s = sample_chain(3, p)
        assert vf.verify_trace_involution("chain", s, Z, W, 2, 3, p).passed

    def test_self_bracket_vanishes(self):
        p = ModelParams(N=3)
        s = sample_rs(2, p)
        assert vf.verify_trace_involution("RS", s, Z, Z, 2, 2, p).residual_max == 0

    def test_bad_power(self):
        p = ModelParams(N=2)
        with pytest.raises(ValueError):
            vf.verify_trace_involution("RS", sample_rs(0, p), Z, W, 5, 1, p)


class TestCM:
    def test_free_case(self):
        p = ModelParams(N=2, nu=0.0)
        s = sample_rs(0, p)
        r = vf.verify_cm_linear(s, Z, W, p)
        assert r.residual_max < 1e-15

    @pytest.mark.parametrize("N", [2, 3])
    def test_random(self, N):
        p = ModelParams(N=N)
        s = sample_rs(10 + N, p)
        for gi, (z, w) in enumerate(_grid(s, p, N)):
            r = vf.verify_cm_linear(s, z, w, p, tol=1e-9, fd_oracle=gi == 0)
            assert r.passed
            if gi == 0:
                assert r.details["fd_vs_ad"] < 1e-6


class TestChain:
    @pytest.mark.parametrize("N,n", [(2, 2), (2, 3), (3, 2)])
    def test_all_site_pairs(self, N, n):
        p = ModelParams(N=N, n=n)
        s = sample_chain(5, p)
        (z, w), = _grid(s, p, 5, size=1, chain=True)
        reps = vf.sweep_chain_thm1(s, z, w, p)
        assert len(reps) == n * n and all(r.passed for r in reps)

    def test_both_neighbour_terms_fire(self):
        p = ModelParams(N=2, n=2)
        s = sample_chain(6, p)
        r = vf.verify_chain_thm1(s, 1, 2, Z, W, p, fd_oracle=True)
        assert r.passed and r.details["fd_vs_ad"] < 1e-6

    def test_distant_sites_vanish_exactly(self):
        p = ModelParams(N=2, n=4)
        s = sample_chain(2, p)
        for a, b in [(1, 3), (2, 4), (3, 1), (4, 2)]:
            r = vf.verify_chain_thm1(s, a, b, Z, W, p)
            assert r.details["site_gap"] == 2
            assert r.details["lhs_exact_zero"] and r.details["rhs_exact_zero"]
            assert r.residual_max == 0

    def test_n4_adjacent_pairs(self):
        p = ModelParams(N=2, n=4)
        s = sample_chain(2, p)
        assert all(r.passed for r in vf.sweep_chain_thm1(s, Z, W, p))


class TestMonodromy:
    @pytest.mark.parametrize("n", [2, 3])
    def test_random(self, n):
        p = ModelParams(N=2, n=n)
        s = sample_chain(1, p)
        r = vf.verify_monodromy_thm2(s, Z, W, p)
        assert r.passed
        assert r.details["leibniz_vs_direct"] < 1e-10
        assert r.details["skew_symmetry"] < 1e-10
        assert r.details["breve_formula_gap"] < 1e-9

    def test_single_site_is_rs_structure(self):
        p = ModelParams(N=2, n=1)
        rs = sample_rs(4, p)
        ch = ChainState(p=rs.p.reshape(1, 2), q=rs.q.reshape(1, 2))
        a = vf.verify_monodromy_thm2(ch, Z, W, p)
        b = vf.verify_rs_quadratic(rs, Z, W, p)
        assert a.passed and b.passed


class TestAppB:
    def test_trivial(self):
        p = ModelParams(N=1)
        s = RSState(p=np.array([0.2]), q=np.array([0.1j]))
        assert vf.verify_appb(s, Z, W, p).residual_max < 1e-12

    @pytest.mark.parametrize("N", [2, 3])
    def test_random(self, N):
        p = ModelParams(N=N)
        s = sample_rs(N + 1, p)
        r = vf.verify_appb(s, Z, W, p)
        assert r.passed
        assert max(r.details["skew"].values()) < 1e-11
        assert r.details["gauge"] < 1e-11
        assert r.details["closed_form_gap"] < 1e-10


def _fieldpoint(N, seed=3, x=1.1, M=2):
    p = ModelParams(N=N)
    return fk.eval_fieldpoint(fk.sample_field(seed, p, M), x, params=p), p


class TestFieldStructure:
    def test_single_particle(self):
        fp, p = _fieldpoint(1)
        r = vf.verify_field_ultralocal(fp, Z, W, p, prelimit=False)
        assert r.residual_max < 1e-13

    def test_constant_fields(self):
        p = ModelParams(N=2)
        s = sample_rs(2, p)
        fp = fk.eval_fieldpoint(fk.constant_field(s.q, s.p), 0.4, params=p)
        assert vf.verify_field_ultralocal(fp, Z, W, p, tol=1e-9).passed

    @pytest.mark.parametrize("N", [2, 3])
    def test_random_fields(self, N):
        fp, p = _fieldpoint(N)
        r = vf.verify_field_ultralocal(fp, Z, W, p)
        assert r.passed
        assert r.details["component_vs_commutator"]["1"] < 1e-10
        assert r.details["component_vs_commutator"]["-1"] > 1e-3
        assert r.details["prelimit_singular"] < 1e-6

    def test_exact_prelimit_leaves_e2_term(self):
        # the exact limit of the pre-limit bracket differs from the displayed
        # blocks by -sum (A_j - A_i) E2(q_ji) E_ii (x) E_jj
        fp, p = _fieldpoint(2)
        pre = vf.ultralocal_prelimit(fp, Z, W, p)
        A = fk.limit_alpha2(fp, p)
        q = fp.qs(0)
        c = np.zeros((2,) * 4, dtype=complex)
        for i in range(2):
            for j in range(2):
                if i != j:
                    c[i, i, j, j] = -(A[j] - A[i]) * el.e2(q[j] - q[i], p.modulus)
        assert tn.norm(pre["total"] - tn.from_coeffs(c)) < 1e-9 * pre["scale"]

    def test_block_sequence(self):
        fp, p = _fieldpoint(2)
        reps = vf.appc_block_sequence(fp, Z, W, p)
        assert [r.details["block"] for r in reps] == list(vf.BLOCK_NAMES)
        # the diagonal-index blocks match their displayed limits; the
        # complementary ones move terms among themselves (see the ledger)
        assert all(reps[i].passed for i in (0, 2, 4))

    def test_coefficient(self):
        for N in (1, 2, 3):
            fp, p = _fieldpoint(N)
            r = vf.verify_nonultralocal_coefficient(fp, Z, W, p)
            assert r.passed
            assert r.details["symmetry"] < 1e-13
            assert r.details["prelimit_vs_three_sum"] < 1e-9
