"""Tests for the single-antenna MRT/ZF assistance-transmission structure."""

import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from rissr.channels import cascades, generate
from rissr.core import ScenarioConfig, make_constellation
from rissr.detection import build_composite
from rissr.mrtzf import (
    MrtZfResult,
    alpha_star,
    beta_star,
    build_phase_pair,
    design,
    min_residual,
    mrt_phase,
    su_distance,
    zf_basis,
    zf_feasible,
)

from conftest import crandn


def residual_oracle(f):
    """``max(0, 2 ||f||_inf - ||f||_1)`` written out independently."""
    a = np.abs(f)
    return max(0.0, 2.0 * np.max(a) - np.sum(a))


def brute_min_residual(f, starts=12, seed=0):
    """Multi-start local search over element phases (first phase fixed)."""
    rng = np.random.default_rng(seed)
    N = len(f)
    if N == 1:
        return abs(f[0])

    def obj(phi):
        return abs(f[0] + np.sum(np.exp(1j * phi) * f[1:])) ** 2

    best = np.inf
    for _ in range(starts):
        r = minimize(obj, rng.uniform(0, 2 * np.pi, N - 1), method="BFGS", options={"gtol": 1e-14})
        best = min(best, r.fun)
    return np.sqrt(best)


class TestMrtPhase:
    """Coherent combining basis."""

    def test_real_positive(self):
        np.testing.assert_allclose(mrt_phase(2.0, np.array([1.0, 0.5, 3.0])), 1.0)

    def test_coherent_identity(self, rng):
        h, f = complex(crandn(rng)), crandn(rng, 9)
        th = mrt_phase(h, f)
        assert abs(h + np.vdot(th, f)) == pytest.approx(abs(h) + np.sum(np.abs(f)), rel=1e-12)
        np.testing.assert_allclose(np.abs(th), 1.0, atol=1e-12)

    def test_phase_grid_oracle(self, rng):
        h, f = complex(crandn(rng)), crandn(rng, 2)
        ph = np.linspace(0, 2 * np.pi, 721)
        grid = np.abs(h + np.exp(-1j * ph)[:, None] * f[0] + np.exp(-1j * ph)[None, :] * f[1]).max()
        best = abs(h + np.vdot(mrt_phase(h, f), f))
        assert grid <= best * (1 + 1e-12)
        assert grid == pytest.approx(best, rel=1e-4)

    def test_zero_entry_warns(self):
        with pytest.warns(UserWarning):
            th = mrt_phase(1.0, np.array([1.0, 0.0]))
        assert th[1] == 1.0


class TestZfFeasible:
    """Polygon condition for exact zero forcing."""

    @pytest.mark.parametrize(
        "f, expected", [([3, 1, 1], False), ([1, 1], True), ([2.0], False), ([1, 1, 1], True)]
    )
    def test_cases(self, f, expected):
        assert zf_feasible(np.array(f, complex)) is expected

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            zf_feasible(np.zeros(0))

    def test_agrees_with_residual_law(self):
        rng = np.random.default_rng(7)
        for _ in range(10000):
            f = crandn(rng, int(rng.integers(1, 5)))
            f *= rng.exponential(1.0, len(f))
            assert zf_feasible(f) == (residual_oracle(f) == 0.0)
            assert min_residual(f) == pytest.approx(residual_oracle(f), abs=1e-15)

    def test_residual_law_brute_force(self):
        rng = np.random.default_rng(8)
        for _ in range(60):
            f = crandn(rng, int(rng.integers(1, 5)))
            f *= rng.exponential(1.0, len(f))
            assert brute_min_residual(f) == pytest.approx(min_residual(f), abs=1e-6 * np.sum(np.abs(f)))


class TestZfBasis:
    """Alternating projections onto the null space of ``f_p``."""

    def test_already_orthogonal(self):
        theta, res = zf_basis(np.array([1.0, 1.0]), np.array([1.0, -1.0]))
        assert res < 1e-12
        np.testing.assert_allclose(theta, [1.0, -1.0])

    @pytest.mark.parametrize("N", [8, 16])
    def test_feasible_draws(self, N):
        rng = np.random.default_rng(N)
        for _ in range(50):
            f_p, f_s = crandn(rng, N), crandn(rng, N)
            if not zf_feasible(f_p):
                continue
            theta, res = zf_basis(f_p, f_s)
            np.testing.assert_allclose(np.abs(theta), 1.0, atol=1e-12)
            assert res < 1e-6 * np.linalg.norm(f_p)
            assert res == pytest.approx(abs(np.vdot(theta, f_p)))

    def test_infeasible_lower_bound(self, rng):
        f_p = np.array([3.0, 1.0, 1.0], complex)
        for _ in range(10):
            _, res = zf_basis(f_p, crandn(rng, 3))
            assert res >= 1.0 - 1e-6

    def test_zero_cascade(self, rng):
        theta, res = zf_basis(np.zeros(4), crandn(rng, 4))
        assert res == 0.0 and np.allclose(np.abs(theta), 1.0)


class TestAlphaStar:
    """Smallest assistance weight."""

    @pytest.mark.parametrize("h", [0.0, 0.3, 5.0])
    def test_full_assistance(self, h):
        assert alpha_star(h, np.array([1.0, 2.0]), 1.0)[0] == pytest.approx(1.0, abs=1e-15)

    def test_no_direct_link(self):
        a0, t = alpha_star(0.0, np.array([1.0, 1.0j]), 0.25)
        assert t == 0.0 and a0 == pytest.approx(0.5, abs=1e-15)

    def test_moderate_ratio(self):
        a0, t = alpha_star(10.0, np.array([1.0]), 0.5)
        assert t == 10.0
        assert a0 == pytest.approx(np.sqrt(110.5) - 10.0, rel=1e-12)
        assert a0 == pytest.approx(0.511898, abs=1e-6)

    def test_strong_direct_link(self):
        assert alpha_star(1e3, np.array([1.0]), 0.5)[0] == pytest.approx(0.5, abs=1e-3)

    @given(st.floats(0, 1e4), st.floats(0, 1), st.floats(0, 1))
    def test_bracket_and_monotone(self, t, d1, d2):
        lo, hi = sorted((d1, d2))
        a_lo, _ = alpha_star(t, np.array([1.0]), lo)
        a_hi, _ = alpha_star(t, np.array([1.0]), hi)
        assert lo - 1e-12 <= a_lo <= np.sqrt(lo) + 1e-12
        assert a_lo <= a_hi + 1e-12

    def test_requirement_is_active(self, rng):
        # |h + a theta_p^H f|^2 = (1 - delta)|h|^2 + delta (|h| + sum|f|)^2
        h, f = complex(crandn(rng)), crandn(rng, 6)
        th = mrt_phase(h, f)
        for delta in (0.1, 0.5, 0.9):
            a0, _ = alpha_star(h, f, delta)
            gain = abs(h + a0 * np.vdot(th, f)) ** 2
            S = np.sum(np.abs(f))
            assert gain == pytest.approx((1 - delta) * abs(h) ** 2 + delta * (abs(h) + S) ** 2, rel=1e-12)
            assert abs(h + a0 * np.vdot(th, f)) == pytest.approx(abs(h) + a0 * S, rel=1e-12)

    @pytest.mark.parametrize("delta", [-0.1, 1.1])
    def test_rejects_delta(self, delta):
        with pytest.raises(ValueError):
            alpha_star(1.0, np.ones(2), delta)

    def test_rejects_dead_link(self):
        with pytest.raises(ValueError):
            alpha_star(1.0, np.zeros(3), 0.5)


class TestBetaStar:
    """Transmission weight phase search."""

    @pytest.fixture
    def inst(self, rng):
        h_s, f_s = complex(crandn(rng)), crandn(rng, 8)
        return h_s, f_s, np.exp(1j * rng.uniform(0, 6, 8)), np.exp(1j * rng.uniform(0, 6, 8))

    def test_full_assistance_leaves_nothing(self, inst):
        assert beta_star(*inst, alpha=1.0) == 0

    def test_modulus(self, inst):
        assert abs(beta_star(*inst, alpha=0.3)) == pytest.approx(0.7, rel=1e-12)

    def test_dense_grid_oracle(self, rng, qpsk, bpsk):
        for _ in range(10):
            h_s, f_s = complex(crandn(rng)), crandn(rng, 8)
            tp, ts = np.exp(1j * rng.uniform(0, 6, 8)), np.exp(1j * rng.uniform(0, 6, 8))
            alpha = float(rng.uniform(0, 1))
            beta = beta_star(h_s, f_s, tp, ts, alpha, qpsk, bpsk)
            A = h_s + alpha * np.vdot(tp, f_s)
            b0 = np.vdot(ts, f_s)
            grid = su_distance(A, b0, 1 - alpha, 2 * np.pi * np.arange(4096) / 4096, qpsk, bpsk)
            best = su_distance(A, b0, 1 - alpha, np.angle(beta), qpsk, bpsk)[0]
            assert best >= grid.max() * (1 - 1e-12)

    def test_real_channels_symmetric(self, qpsk, bpsk):
        h_s, f_s = 0.7, np.array([0.3, 0.5, 0.2])
        ones = np.ones(3)
        beta = beta_star(h_s, f_s, ones, ones, 0.4, qpsk, bpsk)
        A = h_s + 0.4 * np.sum(f_s)
        phis = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        vals = su_distance(A, np.sum(f_s), 0.6, phis, qpsk, bpsk)
        np.testing.assert_allclose(vals, su_distance(A, np.sum(f_s), 0.6, -phis, qpsk, bpsk), rtol=1e-12)
        best = su_distance(A, np.sum(f_s), 0.6, np.angle(beta), qpsk, bpsk)[0]
        assert best >= vals.max() * (1 - 1e-12)

    def test_no_qualifying_pairs(self, inst, bpsk):
        # BPSK on both layers: s_i c_m = s_j c_k for every mixed pair
        assert beta_star(*inst, alpha=0.25, A_s=bpsk, A_c=bpsk) == 0.75

    def test_rejects_alpha(self, inst):
        with pytest.raises(ValueError):
            beta_star(*inst, alpha=1.5)


def result(alpha, beta, N=4, seed=0):
    rng = np.random.default_rng(seed)
    tp, ts = np.exp(1j * rng.uniform(0, 6, N)), np.exp(1j * rng.uniform(0, 6, N))
    return MrtZfResult(tp, ts, alpha, beta, 0.0, True, 0.0)


class TestBuildPhasePair:
    """Conversion to diagonal phase pairs."""

    def test_pure_assistance(self, bpsk):
        res = result(1.0, 0.0)
        pp = build_phase_pair(res)
        np.testing.assert_allclose(pp.theta1, np.conj(res.theta_p))
        np.testing.assert_array_equal(pp.theta2, 0)
        assert pp.is_valid(bpsk)

    def test_pure_transmission(self, bpsk):
        res = result(0.0, 1.0)
        pp = build_phase_pair(res)
        np.testing.assert_array_equal(pp.theta1, 0)
        np.testing.assert_allclose(pp.theta2, np.conj(res.theta_s_perp))
        assert pp.is_valid(bpsk)

    def test_split(self, bpsk):
        pp = build_phase_pair(result(0.6, 0.4j, N=16))
        assert np.all(np.abs(pp.theta1 + pp.theta2) <= 1 + 1e-9)
        assert np.all(np.abs(pp.theta1 - pp.theta2) <= 1 + 1e-9)

    def test_cap_violation(self):
        with pytest.raises(ValueError):
            build_phase_pair(result(0.7, 0.4))


class TestDesign:
    """End-to-end structure on generated channels."""

    @pytest.fixture
    def cfg(self):
        return ScenarioConfig(M=1, N=16, seed=3)

    def test_invariants(self, cfg):
        for draw in range(5):
            res = design(generate(cfg, draw), 0.5)
            np.testing.assert_allclose(np.abs(res.theta_p), 1.0, atol=1e-12)
            np.testing.assert_allclose(np.abs(res.theta_s_perp), 1.0, atol=1e-12)
            assert abs(res.alpha) + abs(res.beta) <= 1 + 1e-9
            assert build_phase_pair(res).is_valid(make_constellation("BPSK"))

    def test_primary_points_ignore_secondary(self, cfg, qpsk, bpsk):
        ch = generate(cfg, 0)
        res = design(ch, 0.5)
        assert res.feasible
        w = np.array([np.sqrt(cfg.P_t)])
        cc = build_composite(ch, w, build_phase_pair(res), qpsk, bpsk, "PU")
        dc = abs(bpsk.symbols[0] - bpsk.symbols[1])
        for i, s in enumerate(qpsk.symbols):
            gap = abs(cc.point(i, 0) - cc.point(i, 1))
            assert gap <= abs(res.beta) * dc * res.zf_residual * abs(s) * abs(w[0]) * (1 + 1e-9) + 1e-300

    def test_assistance_meets_requirement(self, cfg):
        ch = generate(cfg, 1)
        res = design(ch, 0.8)
        casc = cascades(ch)
        h = np.conj(ch.h_p[0])
        gain = abs(h + res.alpha * np.vdot(res.theta_p, casc.f_p)) ** 2
        S = np.sum(np.abs(casc.f_p))
        assert gain >= ((1 - 0.8) * abs(h) ** 2 + 0.8 * (abs(h) + S) ** 2) * (1 - 1e-12)

    def test_needs_single_antenna(self):
        with pytest.raises(ValueError):
            design(generate(ScenarioConfig(M=2, N=4), 0), 0.5)

    def test_quiet_on_generic_draws(self, cfg):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            design(generate(cfg, 2), 0.4)
