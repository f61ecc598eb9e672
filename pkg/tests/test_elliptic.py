from __future__ import annotations

import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rslab import contour
from rslab import elliptic as el

TAUS = [1j, 0.3 + 0.8j]


def mp_theta(z, tau, deriv=0):
    """Independent oracle: mpmath theta_1 at argument pi z, nome exp(i pi tau)."""
    q = mpmath.exp(1j * mpmath.pi * tau)
    return complex(mpmath.jtheta(1, mpmath.pi * z, q, deriv) * mpmath.pi ** deriv)


def mp_e1(u, tau):
    return mp_theta(u, tau, 1) / mp_theta(u, tau)


def mp_phi(z, u, tau):
    return mp_theta(0, tau, 1) * mp_theta(z + u, tau) / (mp_theta(z, tau) * mp_theta(u, tau))


points = st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))


def _pt(ab, tau):
    return complex(ab[0] + ab[1] * tau)


class TestTheta:
    def test_zero_at_origin(self):
        assert el.theta(0, 1j) == 0

    def test_odd(self):
        z = 0.3 + 0.1j
        assert abs(el.theta(-z, 1j) + el.theta(z, 1j)) < 1e-15

    @pytest.mark.parametrize("tau", TAUS)
    @pytest.mark.parametrize("z", [0.25, 0.1 + 0.2j, -0.37 + 0.41j, 1.7 - 2.3j])
    def test_against_mpmath(self, tau, z):
        mpmath.mp.dps = 30
        for order in range(4):
            ref = mp_theta(z, tau, order)
            got = el.theta_d(z, el.Modulus(tau), order)
            assert abs(got - ref) <= 1e-12 * max(1.0, abs(ref))

    def test_direct_series(self):
        mpmath.mp.dps = 40
        q = mpmath.exp(-mpmath.pi)
        ref = 2 * sum((-1) ** n * q ** ((n + mpmath.mpf(1) / 2) ** 2) * mpmath.sin((2 * n + 1) * mpmath.pi / 4)
                      for n in range(200))
        assert abs(el.theta(0.25, 1j) - complex(ref)) < 1e-14

    def test_even_derivatives_vanish_at_zero(self):
        assert abs(el.theta_d(0, el.Modulus(1j), 0)) == 0
        assert abs(el.theta_d(0, el.Modulus(1j), 2)) < 1e-13

    def test_first_derivative_fd(self):
        m = el.Modulus(1j)
        h = 1e-5
        fd = (el.theta(h, m) - el.theta(-h, m)) / (2 * h)
        assert abs(el.theta_d(0, m, 1) - fd) < 1e-8

    @pytest.mark.parametrize("tau", TAUS)
    def test_quasi_periodicity_unreduced(self, tau):
        m = el.Modulus(tau)
        z = 0.21 - 0.13j
        assert abs(el.theta(z + 1, m) + el.theta(z, m)) < 1e-12
        expected = -cmath.exp(-1j * math.pi * tau - 2j * math.pi * z) * el.theta_series_unreduced(z, m)
        assert abs(el.theta_series_unreduced(z + tau, m) - expected) < 1e-12 * max(1, abs(expected))

    def test_unsupported_order(self):
        with pytest.raises(el.UnsupportedOrderError):
            el.theta_d(0.1, el.Modulus(1j), 4)

    def test_invalid_modulus(self):
        with pytest.raises(el.InvalidModulusError):
            el.Modulus(-1j)


class TestKronecker:
    @pytest.mark.parametrize("tau", TAUS)
    def test_against_mpmath(self, tau):
        mpmath.mp.dps = 30
        m = el.Modulus(tau)
        for z, u in [(0.21 + 0.1j, -0.33 + 0.27j), (0.4 - 0.2j, 0.15 + 0.35j)]:
            assert abs(el.kronecker_phi(z, u, m) - mp_phi(z, u, tau)) < 1e-11
            assert abs(el.e1(u, m) - mp_e1(u, tau)) < 1e-11

    @settings(max_examples=40, deadline=None)
    @given(points, points)
    def test_parity(self, a, b):
        m = el.Modulus(1j)
        z, u = _pt(a, m.tau), _pt(b, m.tau)
        if min(el.lattice_distance(v, m) for v in (z, u, z + u)) < 0.05:
            return
        val = el.kronecker_phi(z, u, m)
        assert abs(val + el.kronecker_phi(-z, -u, m)) <= 1e-12 * max(1, abs(val))
        assert abs(el.e1(u, m) + el.e1(-u, m)) <= 1e-12 * max(1, abs(el.e1(u, m)))
        assert abs(el.e2(u, m) - el.e2(-u, m)) <= 1e-12 * max(1, abs(el.e2(u, m)))

    @settings(max_examples=40, deadline=None)
    @given(points, points)
    def test_periodicity_in_z(self, a, b):
        m = el.Modulus(0.3 + 0.8j)
        z, u = _pt(a, m.tau), _pt(b, m.tau)
        if min(el.lattice_distance(v, m) for v in (z, u, z + u)) < 0.05:
            return
        val = el.kronecker_phi(z, u, m)
        assert abs(el.kronecker_phi(z + 1, u, m) - val) <= 1e-11 * max(1, abs(val))
        assert abs(el.phi_dz(z + 1, u, m) - el.phi_dz(z, u, m)) <= 1e-10 * max(1, abs(el.phi_dz(z, u, m)))
        assert abs(el.wp(u + 1, m) - el.wp(u, m)) <= 1e-10 * max(1, abs(el.wp(u, m)))

    def test_residue_in_z(self):
        m = el.Modulus(1j)
        u = 0.31 + 0.17j
        res = contour.laurent_coeffs(lambda z: el.kronecker_phi(z, u, m), 0.1, 16, [-1])[-1]
        assert abs(res - 1) < 1e-8

    def test_derivative_relations(self):
        m = el.Modulus(1j)
        z, u = 0.23 + 0.12j, -0.31 + 0.27j
        h = 1e-5
        fd = (el.kronecker_phi(z + h, u, m) - el.kronecker_phi(z - h, u, m)) / (2 * h)
        assert abs(el.phi_dz(z, u, m) - fd) < 1e-8 * abs(fd)
        rel = el.kronecker_phi(z, u, m) * (el.e1(z + u, m) - el.e1(u, m))
        assert abs(el.phi_du(z, u, m) - rel) < 1e-13

    def test_wp_relations(self):
        m = el.Modulus(1j)
        u = 0.27 - 0.19j
        # wp and E2 differ by a u-independent constant
        v = -0.11 + 0.33j
        assert abs((el.wp(u, m) - el.e2(u, m)) - (el.wp(v, m) - el.e2(v, m))) < 1e-12
        h = 1e-5
        fd = (el.wp(u + h, m) - el.wp(u - h, m)) / (2 * h)
        assert abs(el.wp_d(u, m) - fd) < 1e-6 * max(1, abs(fd))

    def test_wp_degeneration(self):
        # E1-sum degeneration at u2 = -u1 is the wp product identity
        m = el.Modulus(1j)
        z, u = 0.19 + 0.23j, 0.31 - 0.12j
        assert abs(el.kronecker_phi(z, u, m) * el.kronecker_phi(z, -u, m) - (el.wp(z, m) - el.wp(u, m))) < 1e-12

    def test_pole_guard(self):
        m = el.Modulus(1j, guard=1e-3)
        with pytest.raises(el.PoleProximityError):
            el.e1(1e-5, m)
        with pytest.raises(el.PoleProximityError):
            el.kronecker_phi(1 + 1j + 1e-6, 0.2, m)


class TestIdentitySuite:
    @pytest.mark.parametrize("tau", TAUS)
    def test_all_identities(self, tau):
        out = el.identity_suite(7, 100, el.Modulus(tau))
        assert set(out) == set(el.IDENTITY_NAMES)
        assert max(out.values()) <= 1e-10

    def test_deterministic(self):
        assert el.identity_suite(3, 10, 1j) == el.identity_suite(3, 10, 1j)

    def test_zero_trials_rejected(self):
        with pytest.raises(ValueError):
            el.identity_suite(0, 0, 1j)
