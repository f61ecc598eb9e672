from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rslab import fieldkit as fk
from rslab.states import ModelParams, sample_rs

Z = 0.21 + 0.13j


def _cfg(N=2, k=1.0, seed=3):
    p = ModelParams(N=N, k=k)
    return fk.sample_field(seed, p), p


class TestConfig:
    def test_jets_match_finite_differences(self):
        cfg, _ = _cfg()
        h = 1e-5
        for r in range(3):
            fd = (cfg.q(0.7 + h, r) - cfg.q(0.7 - h, r)) / (2 * h)
            np.testing.assert_allclose(fd, cfg.q(0.7, r + 1), atol=1e-8)
            fd = (cfg.p(0.7 + h, r) - cfg.p(0.7 - h, r)) / (2 * h)
            np.testing.assert_allclose(fd, cfg.p(0.7, r + 1), atol=1e-8)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-3, 3))
    def test_periodic(self, x):
        cfg, _ = _cfg()
        np.testing.assert_allclose(cfg.q(x + 2 * np.pi), cfg.q(x), atol=1e-12)
        np.testing.assert_allclose(cfg.p(x + 2 * np.pi, 1), cfg.p(x, 1), atol=1e-12)

    def test_padding_is_invisible(self):
        cfg, _ = _cfg()
        big = fk.pad_modes(cfg, 6)
        assert big.M == 6
        np.testing.assert_allclose(big.q(1.3, 2), cfg.q(1.3, 2), atol=1e-14)
        with pytest.raises(ValueError):
            fk.pad_modes(cfg, 1)

    def test_json_round_trip(self):
        cfg, p = _cfg()
        back, bp = fk.FieldConfig.from_json(cfg.to_json(p))
        assert bp == p
        np.testing.assert_array_equal(back.c, cfg.c)
        np.testing.assert_array_equal(back.Q, cfg.Q)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            fk.FieldConfig(np.zeros(2), np.zeros((2, 3)), np.zeros((2, 5)))

    def test_guard(self):
        p = ModelParams(N=2)
        cfg = fk.constant_field([0.3, 0.3 + 1e-5], [0.1, 0.2])
        with pytest.raises(fk.FieldGuardError):
            fk.eval_fieldpoint(cfg, 0.0, params=p)
        # alpha^2 = k q_x + nu must stay away from zero
        bad = fk.FieldConfig([0.0, 0.5], np.array([[0, 0, 0], [0, 0, 0]]), np.zeros((2, 3)))
        bad.c[0, 2] = 1j * p.nu / 2
        bad.c[0, 0] = -1j * p.nu / 2
        with pytest.raises(fk.FieldGuardError):
            fk.eval_fieldpoint(bad, 0.0, params=p)


class TestCM:
    def test_zero_curvature_at_k0(self):
        for N in (2, 3):
            cfg, p = _cfg(N, k=0.0)
            assert fk.cm_zs_residual(cfg, 1.1, Z, p, scaled=True) < 1e-12

    def test_time_derivative_against_euler_steps(self):
        # central difference of two Euler steps of the coefficient flow
        cfg, p = _cfg(2, k=1.0)
        t = fk.cm_zs_terms(cfg, 1.1, Z, p)
        d = 1e-5
        ups = [np.asarray(fk.cm_field_U(fk.eval_fieldpoint(fk.euler_step(cfg, p, s * d), 1.1, shifts=(0,)), Z, p),
                          dtype=complex) for s in (1, -1)]
        fd = (ups[0] - ups[1]) / (2 * d)
        assert np.max(np.abs(fd - t["U_t"])) < 1e-7 * np.max(np.abs(t["U_t"]))

    def test_pdot_forms_agree_at_k1(self):
        cfg, p = _cfg(2, k=1.0)
        fp = fk.eval_fieldpoint(cfg, 0.4, shifts=(0,), params=p)
        a = fk.cm_field_eom(fp, p, "variational")["pdot"]
        b = fk.cm_field_eom(fp, p, "compact")["pdot"]
        np.testing.assert_allclose(np.array(a, dtype=complex), np.array(b, dtype=complex), atol=1e-12)

    @pytest.mark.parametrize("x", [0.0, 1.1, 4.0])
    def test_density_forms(self, x):
        cfg, p = _cfg(3)
        assert fk.cm_density_gap(cfg, x, p) < 1e-10

    def test_hamiltonian_forms(self):
        cfg, p = _cfg(2)
        a = fk.cm_field_hamiltonian(cfg, p)
        b = fk.cm_field_hamiltonian(cfg, p, form="expanded")
        assert abs(a - b) < 1e-10 * max(1, abs(a))

    @pytest.mark.parametrize("N", [2, 3])
    def test_k0_reduces_to_particles(self, N):
        p = ModelParams(N=N)
        red = fk.k0_reduction(sample_rs(N, p), Z, p)
        assert red["U_vs_lax"] < 1e-12 and red["density_vs_hamiltonian"] < 1e-12


class TestRS:
    @pytest.mark.parametrize("eps", [1e-2, 0.05 + 0.02j])
    @pytest.mark.parametrize("N", [2, 3])
    def test_zero_curvature(self, N, eps):
        cfg, p = _cfg(N)
        assert fk.rs_zs_residual(cfg, 1.1, Z, eps, p, scaled=True) < 1e-10

    def test_h_is_weight_sum(self):
        cfg, p = _cfg(2)
        fp = fk.eval_fieldpoint(cfg, 0.3, 0.02, params=p)
        assert abs(complex(fk.rs_field_h(fp, p)) - sum(complex(b) for b in fk.rs_field_weights(fp, p))) < 1e-13
