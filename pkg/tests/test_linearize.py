import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from vblin import corpus
from vblin.bundle import BundlePoint, fiber_norms
from vblin.calculus import derivative
from vblin.hadamard import fiber_tangent
from vblin.linearize import (
    BumpFn, DomainEscape, HomotopyConfig, Kind, admissible_delta, homotopy_blocks,
    injectivity_certificate, linhom, linhom_map, mu, mu_lipschitz, mu_prime, phi,
    rank_certificate, support_check, tube_samples,
)


class TestBump:
    def test_plateaus(self):
        s = np.array([0.0, 0.5, 1.0, 2.0, 3.0, 100.0])
        np.testing.assert_array_equal(mu(s), [0, 0, 0, 1, 1, 1])
        assert mu(1.5) == pytest.approx(0.5, abs=1e-15)

    @given(st.floats(0, 5), st.floats(0, 5))
    def test_monotone(self, s1, s2):
        lo, hi = sorted((s1, s2))
        assert mu(lo) <= mu(hi)

    @given(st.floats(1.01, 1.99))
    def test_derivative_against_fd(self, s):
        fd = derivative(lambda p: mu(p[:, 0]), [[s]], (1,))[0, 0]
        assert mu_prime(s) == pytest.approx(fd, abs=1e-7)

    def test_flat_at_ends(self):
        assert mu_prime(1.0) == 0.0 and mu_prime(2.0) == 0.0
        assert mu_prime(1.01) < 1e-30

    def test_lipschitz_against_optimizer(self):
        res = optimize.minimize_scalar(lambda s: -mu_prime(s), bounds=(1, 2), method="bounded",
                                       options={"xatol": 1e-12})
        assert mu_lipschitz() == pytest.approx(-res.fun, rel=1e-6)
        assert 1.9 < mu_lipschitz() <= 2.0

    def test_general_constants(self):
        b = BumpFn(0.5, 3.0)
        assert b(0.5) == 0.0 and b(3.0) == 1.0 and b(1.75) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            BumpFn(2.0, 1.0)
        with pytest.raises(ValueError):
            mu(-0.1)


class TestConfigAndPhi:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            HomotopyConfig(0.0)
        with pytest.raises(ValueError):
            HomotopyConfig(0.1, t_grid=(0.0, 0.5))
        cfg = HomotopyConfig(0.1, t_grid=(1.0, 0.0, 0.5))
        assert cfg.t_grid == (0.0, 0.5, 1.0)
        assert cfg.with_delta(0.2).t_grid == cfg.t_grid
        assert cfg.to_json()["bump"] == {"a": 1.0, "b": 2.0}

    def test_phi_values(self):
        cfg = HomotopyConfig(0.1)
        assert phi(cfg, 0.0, BundlePoint([], [0.05])) == 0.0
        assert phi(cfg, 0.0, BundlePoint([], [0.25])) == 1.0
        assert phi(cfg, 0.3, BundlePoint([], [0.05])) == pytest.approx(0.3)
        assert phi(cfg, 0.0, BundlePoint([], [0.15])) == pytest.approx(0.5, abs=1e-15)
        with pytest.raises(ValueError):
            phi(cfg, 1.2, BundlePoint([], [0.0]))

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_phi_range(self, t, r):
        cfg = HomotopyConfig(0.2)
        val = phi(cfg, t, np.array([[r]]))[0]
        assert t - 1e-15 <= val <= 1.0


def _samples(h, n, r_max, r_min=0.0):
    return tube_samples(h, n, r_max, r_min)


class TestHomotopy:
    @pytest.mark.parametrize("h", corpus.endpoint_corpus(), ids=lambda h: h.name)
    def test_time_one_is_h(self, h):
        cfg = HomotopyConfig(0.2)
        x, v = _samples(h, 400, h.domain.fiber_radius)
        out = linhom(h, cfg, 1.0, x, v)
        assert np.max(np.abs(out - np.hstack(h(x, v)))) <= 1e-12

    @pytest.mark.parametrize("h", corpus.endpoint_corpus(), ids=lambda h: h.name)
    def test_time_zero_is_linear_inside(self, h):
        cfg = HomotopyConfig(0.2)
        x, v = _samples(h, 400, cfg.delta)
        out = linhom(h, cfg, 0.0, x, v)
        assert np.max(np.abs(out - np.hstack(fiber_tangent(h)(x, v)))) <= 1e-8

    @pytest.mark.parametrize("h", corpus.endpoint_corpus(), ids=lambda h: h.name)
    def test_zero_section_fixed(self, h):
        cfg = HomotopyConfig(0.2)
        xs = h.domain.base_grid(7)
        zeros = np.zeros((len(xs), h.source.fiber_dim))
        for t in cfg.t_grid:
            out = linhom(h, cfg, t, xs, zeros)
            assert np.max(np.abs(out - np.hstack(h(xs, zeros)))) == 0.0

    @given(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), st.floats(0.4, 0.5), st.floats(0, 1))
    def test_support(self, t, r, x):
        h = corpus.exp_shear()
        cfg = HomotopyConfig(0.2)
        for sign in (1, -1):
            v = np.array([[sign * r]])
            out = linhom(h, cfg, t, [[x]], v)
            assert np.max(np.abs(out - np.hstack(h([[x]], v)))) <= 1e-12

    def test_support_check(self):
        h = corpus.sine()
        cfg = HomotopyConfig(0.1)
        v = np.linspace(0.2, 1.0, 9)[:, None]
        assert support_check(h, cfg, cfg.t_grid, None, v) == 0.0
        with pytest.raises(ValueError):
            support_check(h, cfg, cfg.t_grid, None, np.array([[0.1]]))

    def test_single_point(self):
        h = corpus.cubic()
        out = linhom(h, HomotopyConfig(0.5), 0.0, BundlePoint([], [0.1]))
        assert out.shape == (1,) and out[0] == pytest.approx(0.1, abs=1e-10)

    def test_domain_escape(self):
        h = corpus.exp_shear()
        with pytest.raises(DomainEscape):
            linhom(h, HomotopyConfig(0.2), 0.5, [[0.5]], [[0.9]])

    def test_map_wrapper(self):
        h = corpus.sine()
        H = linhom_map(h, HomotopyConfig(0.3), 0.5)
        _, b = H(None, np.array([0.2]))
        assert b[0] == pytest.approx(linhom(h, HomotopyConfig(0.3), 0.5, None, np.array([0.2]))[0])

    def test_blocks_at_zero_section(self):
        h = corpus.shear_q()
        cfg = HomotopyConfig(0.1)
        for t in (0.0, 0.5, 1.0):
            B = homotopy_blocks(h, cfg, t, [0.5], np.array([0.0]))
            assert B.P[0, 0] == pytest.approx(1.0, abs=1e-6)
            assert B.Q[0, 0] == pytest.approx(0.5 * t, abs=1e-6)
            assert B.S[0, 0] == pytest.approx(1.0, abs=1e-6)


def test_tube_samples_radii():
    h = corpus.two_fiber()
    x, v = tube_samples(h, 500, 0.3, 0.1)
    r = fiber_norms(v)
    assert len(x) == 500 and r.min() >= 0.1 - 1e-12 and r.max() <= 0.3 + 1e-12
    assert np.all((x >= 0) & (x <= 1))
    x2, v2 = tube_samples(h, 500, 0.3, 0.1)
    assert np.array_equal(v, v2)


class TestCertificates:
    def test_rank_pass_and_fail(self):
        cfg = HomotopyConfig(0.25, base_points=3)
        assert rank_certificate(corpus.exp_shear(), cfg, 1, 1).passed
        rep = rank_certificate(corpus.zero_fiber(), cfg, 0, 1)
        assert not rep.passed and rep.margin < 0
        assert rank_certificate(corpus.zero_fiber(), cfg, 0, 0).passed

    def test_rank_bounds(self):
        with pytest.raises(ValueError):
            rank_certificate(corpus.cubic(), HomotopyConfig(0.1), 0, 2)
        with pytest.raises(ValueError):
            rank_certificate(corpus.cubic(), HomotopyConfig(0.1), 1, 1)

    def test_rank_threshold_is_relative(self):
        # S = 1e-6 is tiny but well above 1e-8 (1 + 1e-6)
        from vblin.hadamard import BundleMap
        h = BundleMap.from_expressions([], ["1e-6*v"], 0, 1)
        assert rank_certificate(h, HomotopyConfig(0.1), 0, 1).passed

    def test_injectivity(self):
        grid = np.linspace(-1, 1, 21)[:, None]
        ok = injectivity_certificate(lambda p: p ** 3 + p, grid)
        assert ok.passed and ok.min_ratio > 0.9
        bad = injectivity_certificate(lambda p: p ** 2, grid)
        assert not bad.passed and bad.min_ratio == 0.0
        i, j = bad.worst_pair
        assert grid[i, 0] == -grid[j, 0]

    def test_injectivity_budget(self):
        with pytest.raises(ValueError):
            injectivity_certificate(lambda p: p, np.zeros((5000, 1)))


class TestDeltaSearch:
    def test_kind_parse(self):
        assert Kind.parse("rank(1, 2)") == Kind.rank(1, 2)
        assert Kind.parse({"type": "embedding"}) == Kind.embedding()
        assert str(Kind.parse({"type": "rank", "a": 0, "b": 1})) == "rank(0,1)"
        with pytest.raises(ValueError):
            Kind.parse("submersion")

    @pytest.mark.parametrize("factory,eps,expected", [
        (corpus.identity, 1.0, 1.0),
        (corpus.cubic, 1.0, 0.5),
        (corpus.exp_shear, 0.5, 0.125),
        (corpus.hyperbolic_flow, 1.0, 0.5),
    ])
    def test_embedding_deltas(self, factory, eps, expected):
        res = admissible_delta(factory(), "embedding", eps)
        assert res.passed and res.delta == expected
        last = res.diagnostics[-1]
        assert last["pass"] and all(e["pass"] for e in last["per_t"])

    def test_planted_failure(self):
        res = admissible_delta(corpus.zero_fiber(), "embedding", 1.0)
        assert not res.passed and res.delta is None
        assert res.to_json()["pass"] is False

    def test_rank_kind(self):
        res = admissible_delta(corpus.sine(), "rank(0,1)", 1.0)
        assert res.passed

    def test_epsilon_validation(self):
        with pytest.raises(ValueError):
            admissible_delta(corpus.exp_shear(), "embedding", 1.0)
        with pytest.raises(ValueError):
            admissible_delta(corpus.cubic(), "embedding", 0.0)


def test_cube_rejected_by_separation_ratio():
    # v^3 is injective but flat at 0: images of 0 and 0.01 are 1e-6 apart
    grid = np.linspace(-1, 1, 201)[:, None]
    rep = injectivity_certificate(lambda p: p ** 3, grid, 0.5)
    assert not rep.passed and rep.min_ratio == pytest.approx(1e-4, rel=1e-6)


def test_deviation_inside_support_is_nonzero():
    h = corpus.cubic()
    cfg = HomotopyConfig(0.1)
    v = np.array([[0.15]])
    out = linhom(h, cfg, 0.0, None, v)
    tau = float(mu(1.5))
    assert out[0, 0] == pytest.approx(0.15 + tau * tau * 0.15 ** 3, abs=1e-12)
    assert abs(out[0, 0] - (0.15 + 0.15 ** 3)) > 1e-5
