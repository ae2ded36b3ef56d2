import numpy as np
import pytest
from hypothesis import given, strategies as st

from airloc.channel import ChannelParams, sample_links
from airloc.geometry import generate_hex, place_agents
from airloc.localization import (
    RDEF_GD, GdConfig, crb_proxy, gd_localize, snr_weights, weighted_gd_localize, with_momentum,
)

NO_MOMENTUM = GdConfig(momentum=0.0)


def _sphere_geometry(rng, n=8):
    p = rng.uniform(-50, 50, 3)
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    nodes = p + u * rng.uniform(20, 100, (n, 1))
    return nodes, p


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def test_config_validation():
    for kw in ({"learning_rate": 0.0}, {"discount": 1.0}, {"discount": 0.0}, {"max_iter": 0}):
        with pytest.raises(ValueError):
            GdConfig(**kw)
    assert RDEF_GD.learning_rate == 1.5 and RDEF_GD.max_iter == 5
    assert with_momentum(GdConfig(), 0.0).momentum == 0.0


def test_exact_start_is_fixpoint(rng):
    nodes, p = _sphere_geometry(rng)
    d = np.linalg.norm(nodes - p, axis=1)
    cfg = GdConfig()
    r = gd_localize(nodes, d, p, cfg)
    assert r.iterations_used == 0 and r.converged
    assert np.linalg.norm(r.position - p) <= cfg.momentum * np.linalg.norm(p) + cfg.learning_rate / 8


def test_eight_nodes_five_metre_offset():
    rng = np.random.default_rng(21)
    errs = []
    for _ in range(300):
        nodes, p = _sphere_geometry(rng)
        d = np.linalg.norm(nodes - p, axis=1)
        errs.append(np.linalg.norm(gd_localize(nodes, d, p + 5 * _unit(rng)).position - p))
    assert np.mean(np.array(errs) < 0.5) >= 0.99


def test_hex_deployment_eight_nearest():
    rng = np.random.default_rng(22)
    dep = generate_hex(60.0, 3, rng)
    ok = 0
    for _ in range(300):
        uav, _ = place_agents(dep, 60.0, rng.uniform(10, 40), rng)
        idx = np.argsort(np.linalg.norm(dep.nodes - uav, axis=1))[:8]
        d = np.linalg.norm(dep.nodes[idx] - uav, axis=1)
        ok += np.linalg.norm(gd_localize(dep.nodes[idx], d, uav + 5 * _unit(rng)).position - uav) < 0.5
    assert ok / 300 >= 0.99


def test_two_nodes_with_prior_improve_on_average():
    rng = np.random.default_rng(23)
    post, prior = [], []
    for _ in range(300):
        nodes, p = _sphere_geometry(rng, 2)
        d = np.linalg.norm(nodes - p, axis=1)
        start = p + np.r_[rng.normal(0, 5, 2), 0.0]
        r = gd_localize(nodes, d, start)
        post.append(np.linalg.norm(r.position - p))
        prior.append(np.linalg.norm(start - p))
    assert np.mean(post) < np.mean(prior)
    assert np.max(post) < np.max(prior) + 10.0


def test_uniform_weights_match_unweighted(rng):
    nodes, p = _sphere_geometry(rng)
    d = np.linalg.norm(nodes - p, axis=1) + rng.normal(0, 0.3, 8)
    a = gd_localize(nodes, d, p + 4.0, record_trace=True)
    b = weighted_gd_localize(nodes, d, snr_weights(np.full(8, 17.0)), p + 4.0, record_trace=True)
    assert np.array_equal(a.position, b.position)
    assert a.trace == b.trace


@given(st.lists(st.floats(min_value=-20, max_value=60), min_size=1, max_size=30))
def test_snr_weights_sum_to_n(snr):
    w = snr_weights(snr)
    assert w.sum() == pytest.approx(len(snr))
    assert np.all(w >= 0)


def test_input_errors():
    nodes = np.eye(3)
    with pytest.raises(ValueError):
        gd_localize(nodes, [1.0, 0.0, 1.0], np.zeros(3))
    with pytest.raises(ValueError):
        weighted_gd_localize(nodes, np.ones(3), np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        weighted_gd_localize(nodes, np.ones(3), [1.0, -1.0, 1.0], np.zeros(3))
    with pytest.raises(ValueError):
        gd_localize(np.zeros((0, 3)), [], np.zeros(3))


def test_degenerate_stationary_point():
    # start on the line through two nodes at the midpoint: the two gradient terms cancel
    nodes = np.array([[-10.0, 0, 0], [10.0, 0, 0]])
    r = gd_localize(nodes, [5.0, 5.0], np.zeros(3), NO_MOMENTUM)
    assert not r.converged
    assert r.iterations_used == 0


# invariants ------------------------------------------------------------------

vec3 = st.tuples(*[st.floats(min_value=-500, max_value=500)] * 3).map(np.array)
# shifts on a 2^-10 m grid added to grid coordinates are exact in floating point
grid_vec3 = st.tuples(*[st.integers(-512_000, 512_000)] * 3).map(lambda v: np.array(v) / 1024)


def _grid(x):
    return np.round(np.asarray(x) * 1024) / 1024


@given(st.integers(0, 2**31 - 1), grid_vec3)
def test_translation_equivariance_without_momentum(seed, t):
    rng = np.random.default_rng(seed)
    nodes, p = map(_grid, _sphere_geometry(rng))
    d = np.linalg.norm(nodes - p, axis=1) + rng.normal(0, 0.5, 8)
    start = _grid(p + 5 * _unit(rng))
    a = gd_localize(nodes, d, start, NO_MOMENTUM).position
    b = gd_localize(nodes + t, d, start + t, NO_MOMENTUM).position
    assert np.allclose(b - t, a, atol=1e-9, rtol=0)


@given(st.integers(0, 2**31 - 1), vec3)
def test_translation_approximate_with_momentum(seed, t):
    rng = np.random.default_rng(seed)
    nodes, p = _sphere_geometry(rng)
    d = np.linalg.norm(nodes - p, axis=1)
    start = p + 5 * _unit(rng)
    cfg = GdConfig()
    a = gd_localize(nodes, d, start, cfg)
    b = gd_localize(nodes + t, d, start + t, cfg)
    # the m * p term adds at most m * |p| per iteration; allow one step of slack
    bound = cfg.max_iter * cfg.momentum * (np.linalg.norm(start) + np.linalg.norm(t) + 600) + cfg.learning_rate
    assert np.linalg.norm(b.position - t - a.position) <= bound


@given(st.integers(0, 2**31 - 1), st.floats(min_value=0.0, max_value=1.0))
def test_learning_rate_non_increasing(seed, noise):
    rng = np.random.default_rng(seed)
    nodes, p = _sphere_geometry(rng)
    d = np.abs(np.linalg.norm(nodes - p, axis=1) + rng.normal(0, noise, 8)) + 1e-3
    r = gd_localize(nodes, d, p + 8 * _unit(rng), record_trace=True)
    alphas = [row[5] for row in r.trace]
    assert all(b <= a for a, b in zip(alphas, alphas[1:]))
    assert r.iterations_used <= GdConfig().max_iter


@given(st.integers(0, 2**31 - 1), st.floats(min_value=0.5, max_value=10.0))
def test_noiseless_residual_decreases(seed, offset):
    rng = np.random.default_rng(seed)
    nodes, p = _sphere_geometry(rng, 6)
    d = np.linalg.norm(nodes - p, axis=1)
    start = p + offset * _unit(rng)
    d0 = np.abs(d - np.linalg.norm(nodes - start, axis=1)).sum()
    assert gd_localize(nodes, d, start).final_residual < d0


@pytest.mark.xfail(strict=True, reason="fixed-length normalised steps halve only when D grows, so 50 iterations "
                                       "rarely reach theta_t * |D0|; typical ratio is about 1e-3")
def test_noiseless_residual_below_threshold_fraction():
    rng = np.random.default_rng(24)
    cfg = GdConfig()
    for _ in range(50):
        nodes, p = _sphere_geometry(rng, 6)
        d = np.linalg.norm(nodes - p, axis=1)
        start = p + rng.uniform(0.5, 10.0) * _unit(rng)
        d0 = np.abs(d - np.linalg.norm(nodes - start, axis=1)).sum()
        assert gd_localize(nodes, d, start, cfg).final_residual < cfg.convergence_threshold * d0


def test_trace_csv(tmp_path, rng):
    nodes, p = _sphere_geometry(rng)
    d = np.linalg.norm(nodes - p, axis=1)
    r = gd_localize(nodes, d, p + 3.0, record_trace=True)
    path = tmp_path / "trace.csv"
    r.trace_to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,x,y,z,D,alpha"
    assert len(lines) == 1 + len(r.trace) == 1 + r.iterations_used


# CRB proxy -------------------------------------------------------------------

def test_crb_proxy_examples():
    assert crb_proxy(np.full(4, 2.0)) == pytest.approx(1.0)
    s = np.array([0.3, 0.5, 1.1])
    assert crb_proxy(2 * s) == pytest.approx(4 * crb_proxy(s))
    with pytest.raises(ValueError):
        crb_proxy([])


def test_crb_proxy_ranking_matches_solver_error():
    rng = np.random.default_rng(25)
    dep = generate_hex(60.0, 3, rng)
    params = ChannelParams()
    sets = {4: [], 12: []}
    proxy = {4: [], 12: []}
    for _ in range(300):
        uav, _ = place_agents(dep, 60.0, 20.0, rng)
        dist = np.linalg.norm(dep.nodes - uav, axis=1)
        idx = np.argsort(dist)
        links = sample_links(np.hypot(*(dep.nodes[:, :2] - uav[:2]).T), 20.0, rng, params,
                             dz=20.0 - dep.nodes[:, 2])
        sigma = links["sigma_m"] * 22.0
        start = uav + np.r_[rng.normal(0, 5, 2), 0.0]
        for n in sets:
            sel = idx[:n]
            d_hat = np.maximum(dist[sel] + rng.normal(0, sigma[sel]), 1.0)
            sets[n].append(np.linalg.norm(gd_localize(dep.nodes[sel], d_hat, start).position - uav))
            proxy[n].append(crb_proxy(sigma[sel]))
    proxy_order = np.mean(proxy[4]) < np.mean(proxy[12])
    error_order = np.mean(sets[4]) < np.mean(sets[12])
    assert proxy_order == error_order
