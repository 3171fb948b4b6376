"""Tests for the BER formulas, distance bookkeeping and the two baselines."""

import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rissr.analysis import (
    CaseLabel,
    align_phases,
    appendix_bounds,
    case_distance,
    classify_case,
    eta,
    min_distances,
    min_symbol_distance,
    pairwise_distance,
    q_function,
    q_form_bounds,
    scheme_I,
    scheme_II,
    union_bound_primary,
    union_bound_secondary,
)
from rissr.channels import ChannelSet, cascades
from rissr.core import PhasePair
from rissr.detection import build_composite

from conftest import crandn, random_channels


def mp_q(t):
    return float(mpmath.erfc(mpmath.mpf(t) / mpmath.sqrt(2)) / 2)


def random_pp(rng, N, a=0.5):
    return PhasePair(a * np.exp(1j * rng.uniform(0, 2 * np.pi, N)), (1 - a) * np.exp(1j * rng.uniform(0, 2 * np.pi, N)))


class TestQFunction:
    """Gaussian tail against an arbitrary-precision oracle."""

    def test_anchor_values(self):
        assert q_function(0.0) == 0.5
        assert q_function(1.2815515655) == pytest.approx(0.1, abs=1e-9)
        assert q_function(1.0) == pytest.approx(0.158655, abs=1e-6)

    @given(st.floats(-30.0, 30.0))
    def test_matches_mpmath(self, t):
        assert q_function(t) == pytest.approx(mp_q(t), rel=1e-12, abs=1e-300)

    @given(st.floats(-8.0, 8.0))
    def test_symmetry(self, t):
        assert q_function(-t) == pytest.approx(1.0 - q_function(t), abs=1e-15)

    def test_vectorized(self):
        out = q_function(np.array([0.0, 1.0]))
        assert out.shape == (2,)


class TestDistances:
    """Pairwise and minimum distances."""

    def test_identical_and_adjacent(self, qpsk, bpsk):
        ch = ChannelSet(np.array([1.0]), np.array([1.0]), np.zeros((0, 1)), np.zeros(0), np.zeros(0))
        cc = build_composite(ch, np.array([1.0]), PhasePair.zeros(0), qpsk, bpsk)
        assert pairwise_distance(cc, (0, 0), (0, 0)) == 0.0
        assert pairwise_distance(cc, (0, 0), (1, 0)) == pytest.approx(2.0)
        rep = min_distances(cc, cc)
        assert rep.D_pu == pytest.approx(2.0)
        assert rep.D_su == pytest.approx(0.0)

    def test_raw_channel_oracle(self, rng, qpsk, bpsk):
        ch = random_channels(rng, 2, 3)
        pp = random_pp(rng, 3)
        w = crandn(rng, 2)
        cc = build_composite(ch, w, pp, qpsk, bpsk)

        def x(i, m):
            th = np.diag(pp.theta1 + bpsk.symbols[m] * pp.theta2)
            return (ch.h_p.conj() @ w + ch.g_p.conj() @ th @ ch.H @ w) * qpsk.symbols[i]

        for a, b in itertools.product(itertools.product(range(4), range(2)), repeat=2):
            assert pairwise_distance(cc, a, b) == pytest.approx(abs(x(*a) - x(*b)) ** 2, rel=1e-12, abs=1e-15)

    def test_exhaustive_scan(self, rng, qpsk, bpsk):
        ch = random_channels(rng, 3, 4)
        pp, w = random_pp(rng, 4), crandn(rng, 3)
        pu = build_composite(ch, w, pp, qpsk, bpsk, "PU")
        su = build_composite(ch, w, pp, qpsk, bpsk, "SU")
        rep = min_distances(pu, su)
        pts = list(itertools.product(range(4), range(2)))
        d_pu = min(pairwise_distance(pu, a, b) for a in pts for b in pts if a[0] != b[0])
        d_su = min(pairwise_distance(su, a, b) for a in pts for b in pts if a[1] != b[1])
        assert rep.D_pu == pytest.approx(d_pu) and rep.D_su == pytest.approx(d_su)
        a, b = rep.argmin_pu
        assert pairwise_distance(pu, a, b) == pytest.approx(d_pu)

    def test_no_transmission_means_no_secondary_distance(self, rng, qpsk, bpsk):
        ch = random_channels(rng, 2, 3)
        pp = PhasePair(np.exp(1j * rng.uniform(0, 6, 3)), np.zeros(3))
        w = crandn(rng, 2)
        rep = min_distances(build_composite(ch, w, pp, qpsk, bpsk, "PU"), build_composite(ch, w, pp, qpsk, bpsk, "SU"))
        assert rep.D_su == pytest.approx(0.0, abs=1e-28)

    def test_min_symbol_distance(self, qpsk, bpsk):
        assert min_symbol_distance(qpsk) == pytest.approx(2.0)
        assert min_symbol_distance(bpsk) == pytest.approx(4.0)


class TestCases:
    """Three-way pair classification and the closed forms."""

    def test_same_primary_symbol(self, rng, qpsk, bpsk):
        ch = random_channels(rng, 2, 3)
        pp, w = random_pp(rng, 3), crandn(rng, 2)
        label, value = case_distance(ch, w, pp, qpsk, bpsk, "PU", (1, 0), (1, 1))
        assert label is CaseLabel.D1
        assert value == pytest.approx(abs(pp.theta2 @ (cascades(ch).F_p @ w)) ** 2 * 4.0)

    def test_product_coincidence_is_independent_of_theta2(self, rng, qpsk, bpsk):
        ch = random_channels(rng, 2, 3)
        w = crandn(rng, 2)
        j = int(np.argmin(np.abs(qpsk.symbols + qpsk.symbols[0])))
        pp0 = PhasePair(np.zeros(3), np.exp(1j * rng.uniform(0, 6, 3)))
        pp1 = PhasePair(np.zeros(3), np.exp(1j * rng.uniform(0, 6, 3)))
        vals = []
        for pp in (pp0, pp1):
            label, v = case_distance(ch, w, pp, qpsk, bpsk, "PU", (0, 0), (j, 1))
            assert label is CaseLabel.D2
            vals.append(v)
        assert vals[0] == pytest.approx(vals[1])
        assert vals[0] == pytest.approx(abs(np.vdot(ch.h_p, w)) ** 2 * 4.0)

    def test_classification_rules(self, qpsk, bpsk):
        assert classify_case(qpsk, bpsk, (0, 0), (0, 1)) is CaseLabel.D1
        assert classify_case(qpsk, bpsk, (0, 0), (1, 0)) is CaseLabel.D3
        with pytest.raises(ValueError):
            classify_case(qpsk, bpsk, (0, 0), (0, 0))

    @pytest.mark.parametrize("rx", ["PU", "SU"])
    def test_closed_forms_match_direct(self, rng, qpsk, bpsk, rx):
        ch = random_channels(rng, 2, 5)
        pp, w = random_pp(rng, 5), crandn(rng, 2)
        cc = build_composite(ch, w, pp, qpsk, bpsk, rx)
        pts = list(itertools.product(range(4), range(2)))
        for a, b in itertools.permutations(pts, 2):
            _, v = case_distance(ch, w, pp, qpsk, bpsk, rx, a, b)
            assert v == pytest.approx(pairwise_distance(cc, a, b), rel=1e-9, abs=1e-15)


class TestUnionBounds:
    """Hamming-weighted pairwise sums."""

    def test_bpsk_one_neighbour_per_point(self, bpsk):
        # x = s + s c B with large B: each point has one s-flipped neighbour
        # at squared distance 4, the rest are far; sigma^2 = 2 gives Q(1)
        ch = ChannelSet(np.array([1.0]), np.array([1.0]), np.ones((1, 1)), np.ones(1), np.ones(1))
        cc = build_composite(ch, np.array([1.0]), PhasePair(np.zeros(1), np.array([100.0])), bpsk, bpsk)
        assert union_bound_primary(cc, 2.0) == pytest.approx(mp_q(1.0), rel=1e-12)

    def test_ris_off_counts_each_secondary_copy(self, bpsk):
        # with theta = 0 the c copies coincide and every copy is summed
        ch = ChannelSet(np.array([1.0]), np.array([1.0]), np.zeros((0, 1)), np.zeros(0), np.zeros(0))
        cc = build_composite(ch, np.array([1.0]), PhasePair.zeros(0), bpsk, bpsk)
        assert union_bound_primary(cc, 2.0) == pytest.approx(2 * mp_q(1.0), rel=1e-12)

    def test_quadruple_loop_oracle(self, rng, qpsk, bpsk):
        ch = random_channels(rng, 2, 3)
        pp, w = random_pp(rng, 3), crandn(rng, 2)
        s2 = 0.3
        for rx, fn in (("PU", union_bound_primary), ("SU", union_bound_secondary)):
            cc = build_composite(ch, w, pp, qpsk, bpsk, rx)
            total = 0.0
            for i, m, j, k in itertools.product(range(4), range(2), range(4), range(2)):
                d = pairwise_distance(cc, (i, m), (j, k))
                ham = qpsk.hamming_table()[i, j] if rx == "PU" else bpsk.hamming_table()[m, k]
                total += ham * mp_q(np.sqrt(d / (2 * s2)))
            norm = 8 * (2 if rx == "PU" else 1)
            assert fn(cc, s2) == pytest.approx(total / norm, rel=1e-10)

    def test_zero_snr_limit(self, rng, qpsk, bpsk):
        ch = random_channels(rng, 2, 3)
        cc = build_composite(ch, crandn(rng, 2), random_pp(rng, 3), qpsk, bpsk)
        # every term tends to Q(0) = 1/2
        ham = qpsk.hamming_table()
        limit = 0.5 * len(bpsk) ** 2 * ham.sum() / (8 * 2)
        assert union_bound_primary(cc, 1e30) == pytest.approx(limit, rel=1e-9)

    def test_secondary_saturates_without_transmission(self, rng, qpsk, bpsk):
        ch = random_channels(rng, 2, 3)
        pp = PhasePair(np.exp(1j * rng.uniform(0, 6, 3)), np.zeros(3))
        cc = build_composite(ch, crandn(rng, 2), pp, qpsk, bpsk, "SU")
        # c-pairs with the same s coincide: 4 * 2 ordered pairs at Q(0)
        assert union_bound_secondary(cc, 1e-6) >= 0.5 * 8 / 8 - 1e-12

    def test_swapped_roles(self, rng, bpsk):
        ch = random_channels(rng, 2, 3)
        pp, w = random_pp(rng, 3), crandn(rng, 2)
        cc = build_composite(ch, w, pp, bpsk, bpsk, "SU")
        # with both alphabets BPSK, relabel (i, m) -> (m, i)
        swapped = type(cc)(cc.x.copy(), cc.m.copy(), cc.i.copy(), "SU", bpsk, bpsk)
        assert union_bound_secondary(cc, 0.7) == pytest.approx(union_bound_primary(swapped, 0.7))

    def test_rejects_bad_noise(self, rng, qpsk, bpsk):
        cc = build_composite(random_channels(rng, 1, 1), np.ones(1), PhasePair.zeros(1), qpsk, bpsk)
        with pytest.raises(ValueError):
            union_bound_primary(cc, 0.0)


class TestChernoff:
    """Exponential upper bounds."""

    def test_zero_distance(self):
        ps, pc = appendix_bounds(0.0, 0.0, 1.0, 1.0, 1.0, 4, 2)
        assert ps == pytest.approx(0.5 * 3 * 2) and pc == pytest.approx(0.5 * 4 * 1)

    @given(
        st.floats(0.0, 50.0), st.floats(0.0, 50.0), st.floats(0.01, 10.0),
        st.floats(0.01, 10.0), st.floats(0.01, 10.0),
    )
    def test_dominates_q_form(self, Dp, Ds, P, s2p, s2s):
        ps, pc = appendix_bounds(Dp, Ds, P, s2p, s2s, 4, 2)
        qs, qc = q_form_bounds(Dp, Ds, P, s2p, s2s, 4, 2)
        assert ps >= qs * (1 - 1e-12) and pc >= qc * (1 - 1e-12)

    def test_dominates_union_bound(self, rng, qpsk, bpsk):
        for _ in range(100):
            ch = random_channels(rng, 2, 3)
            pp, w = random_pp(rng, 3, rng.uniform()), crandn(rng, 2)
            w = w / np.linalg.norm(w)
            P, s2 = rng.uniform(0.1, 5.0), rng.uniform(0.05, 2.0)
            pu = build_composite(ch, np.sqrt(P) * w, pp, qpsk, bpsk, "PU")
            su = build_composite(ch, np.sqrt(P) * w, pp, qpsk, bpsk, "SU")
            rep = min_distances(pu, su)
            ps, pc = appendix_bounds(rep.D_pu / P, rep.D_su / P, P, s2, s2, 4, 2)
            assert ps >= union_bound_primary(pu, s2)
            assert pc >= union_bound_secondary(su, s2)
            # same numbers with power already inside the distances
            assert appendix_bounds(rep.D_pu, rep.D_su, P, s2, s2, 4, 2, unit_power=False) == pytest.approx((ps, pc))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            appendix_bounds(-1.0, 0.0, 1.0, 1.0, 1.0, 4, 2)


class TestBaselines:
    """RIS-off and pure-assistance beamformers."""

    def test_scheme_one_unit_channel(self, qpsk):
        h = np.array([0.6, 0.8j])
        ch = ChannelSet(h, h, np.zeros((0, 2)), np.zeros(0), np.zeros(0))
        res = scheme_I(ch, 1.0, qpsk)
        assert res.D == pytest.approx(2.0)
        res2 = scheme_I(ch.replace(h_p=2 * h), 1.0, qpsk)
        assert res2.D == pytest.approx(4 * res.D)

    def test_scheme_one_pair_scan(self, rng, qpsk):
        ch = random_channels(rng, 3, 0)
        res = scheme_I(ch, 2.0, qpsk)
        x = np.vdot(ch.h_p, res.w) * qpsk.symbols
        scan = min(abs(a - b) ** 2 for a, b in itertools.combinations(x, 2))
        assert res.D == pytest.approx(scan)
        assert np.linalg.norm(res.w) ** 2 == pytest.approx(2.0)

    def test_scheme_one_blocked(self, qpsk):
        ch = ChannelSet(np.zeros(2), np.ones(2), np.zeros((0, 2)), np.zeros(0), np.zeros(0))
        res = scheme_I(ch, 1.0, qpsk)
        assert res.degenerate and res.D == 0.0

    def test_scheme_two_without_elements(self, rng, qpsk):
        ch = random_channels(rng, 2, 0)
        a, b = scheme_I(ch, 1.0, qpsk), scheme_II(ch, 1.0, qpsk)
        np.testing.assert_allclose(a.w, b.w)
        assert a.D == pytest.approx(b.D)

    def test_scheme_two_aligned_real_channels(self, qpsk):
        f = np.array([0.3, 0.5, 0.2])
        ch = ChannelSet(np.array([1.0]), np.array([1.0]), f[:, None], np.ones(3), np.ones(3))
        res = scheme_II(ch, 1.0, qpsk)
        np.testing.assert_allclose(res.theta, np.ones(3), atol=1e-12)
        assert res.gain == pytest.approx(1.0 + f.sum())

    def test_scheme_two_multistart_oracle(self, rng, qpsk):
        ch = random_channels(rng, 2, 4)
        res = scheme_II(ch, 1.0, qpsk)
        F = cascades(ch).F_p
        best = 0.0
        for _ in range(20):
            w = crandn(rng, 2)
            w /= np.linalg.norm(w)
            for _ in range(500):
                th = align_phases(ch, w)
                r = ch.h_p.conj() + th @ F
                w = r.conj() / np.linalg.norm(r)
            best = max(best, abs(np.vdot(ch.h_p, w) + align_phases(ch, w) @ F @ w))
        assert res.gain == pytest.approx(best, rel=1e-6)

    def test_scheme_two_beats_scheme_one(self, rng, qpsk):
        for _ in range(10):
            ch = random_channels(rng, 3, 6)
            assert scheme_II(ch, 1.0, qpsk).D >= scheme_I(ch, 1.0, qpsk).D * (1 - 1e-12)

    def test_eta(self):
        assert eta(2.0, 6.0, 0.0) == 2.0
        assert eta(2.0, 6.0, 1.0) == 6.0
        assert eta(2.0, 6.0, 0.5) == 4.0
        with pytest.raises(ValueError):
            eta(2.0, 6.0, 1.1)
        with pytest.warns(UserWarning):
            eta(6.0, 2.0, 0.5)
