"""Tests for channel generation, cascades and the text dump format."""

import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rissr.channels import (
    ChannelSet,
    cascades,
    dump_channels,
    format_complex,
    generate,
    load_channels,
    parse_complex,
    pathloss,
    rng_for,
)
from rissr.core import ScenarioConfig

from conftest import random_channels


class TestPathloss:
    """Distance-dependent power gain."""

    @pytest.mark.parametrize("xi", [2.0, 2.9, 3.5])
    def test_unit_distance(self, xi):
        assert pathloss(1.0, xi) == pytest.approx(1e-3)

    def test_far_link(self):
        assert pathloss(1000.0, 2.9) == pytest.approx(10 ** (-3 - 2.9 * 3), rel=1e-12)
        assert pathloss(1000.0, 2.9) == pytest.approx(2.239e-12, rel=1e-3)

    def test_pt_to_ris(self):
        assert pathloss(30.0, 2.1) == pytest.approx(1e-3 * 30.0**-2.1, rel=1e-12)

    @pytest.mark.parametrize("d, xi", [(0.0, 2.0), (-1.0, 2.0), (1.0, 0.0)])
    def test_rejects(self, d, xi):
        with pytest.raises(ValueError):
            pathloss(d, xi)


class TestGenerate:
    """Determinism, statistics and blocking."""

    def test_same_seed_and_draw_identical(self, scenario):
        assert generate(scenario, 3).identical(generate(scenario, 3))

    def test_different_draws_differ(self, scenario):
        assert not generate(scenario, 3).allclose(generate(scenario, 4))

    def test_shapes(self, scenario):
        ch = generate(scenario, 0)
        assert ch.h_p.shape == (4,) and ch.H.shape == (16, 4) and ch.g_s.shape == (16,)

    def test_direct_link_power(self):
        cfg = ScenarioConfig(M=1, N=0, seed=11)
        pl = pathloss(cfg.distances()["h_p"], cfg.pathloss_exponents[0])
        p = np.array([abs(generate(cfg, k).h_p[0]) ** 2 for k in range(100000)])
        assert p.mean() == pytest.approx(pl, rel=0.02)

    def test_streams_independent(self):
        a = rng_for(5, 0, 1).standard_normal(4)
        b = rng_for(5, 0, 2).standard_normal(4)
        c = rng_for(5, 0, 1).standard_normal(4)
        assert not np.allclose(a, b)
        np.testing.assert_array_equal(a, c)

    def test_blocked_link_is_zero(self):
        cfg = ScenarioConfig(M=3, N=5, blocked={"h_p"})
        ch = generate(cfg, 0)
        np.testing.assert_array_equal(ch.h_p, 0)
        open_ch = generate(cfg.replace(blocked=frozenset()), 0)
        # the other links use the same stream position
        np.testing.assert_array_equal(ch.H, open_ch.H)

    def test_zero_elements(self):
        ch = generate(ScenarioConfig(N=0), 0)
        assert ch.N == 0 and ch.H.shape == (0, 4)

    def test_read_only(self, drawn):
        with pytest.raises(ValueError):
            drawn.h_p[0] = 0


class TestCascades:
    """``F = diag(g^H) H`` against naive loops."""

    def test_all_ones_reflector(self, rng):
        H = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        ch = ChannelSet(np.ones(2), np.ones(2), H, np.ones(3), np.ones(3))
        np.testing.assert_array_equal(cascades(ch).F_p, H)

    def test_single_element(self, rng):
        ch = random_channels(rng, 3, 1)
        np.testing.assert_allclose(cascades(ch).F_p, np.conj(ch.g_p[0]) * ch.H)

    def test_loop_oracle(self, rng):
        ch = random_channels(rng, 2, 3)
        casc = cascades(ch)
        for n in range(3):
            for m in range(2):
                assert casc.F_p[n, m] == pytest.approx(np.conj(ch.g_p[n]) * ch.H[n, m])
                assert casc.F_s[n, m] == pytest.approx(np.conj(ch.g_s[n]) * ch.H[n, m])
        assert casc.f_p is None

    def test_single_antenna_vectors(self, rng):
        casc = cascades(random_channels(rng, 1, 4))
        np.testing.assert_array_equal(casc.f_p, casc.F_p[:, 0])


class TestTextFormat:
    """Complex tokens and channel dumps round-trip exactly."""

    @given(
        st.floats(allow_nan=False, allow_infinity=False),
        st.floats(allow_nan=False, allow_infinity=False),
    )
    def test_complex_token_round_trip(self, re, im):
        z = complex(re, im)
        assert parse_complex(format_complex(z)) == z

    @pytest.mark.parametrize("tok", ["1+2j", "abc", "1.0", "1+i"])
    def test_bad_tokens(self, tok):
        with pytest.raises(ValueError):
            parse_complex(tok)

    def test_dump_round_trip(self, drawn, tmp_path):
        text = dump_channels(drawn)
        assert load_channels(text).identical(drawn)
        path = tmp_path / "ch.txt"
        dump_channels(drawn, path)
        assert load_channels(path).identical(drawn)
        assert load_channels(io.StringIO(text)).identical(drawn)

    def test_truncated_dump(self, drawn):
        text = dump_channels(drawn)
        with pytest.raises(ValueError):
            load_channels("\n".join(text.splitlines()[:-3]) + "\n")

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ChannelSet(np.ones(2), np.ones(2), np.ones((3, 3)), np.ones(3), np.ones(3))
        with pytest.raises(ValueError):
            ChannelSet(np.array([np.nan]), np.ones(1), np.ones((1, 1)), np.ones(1), np.ones(1))
