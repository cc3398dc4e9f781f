import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vralloc.config import ContentParams, NetworkConfig
from vralloc.correlation import (ContentModel, downlink_correlation, effective_dl_load,
                                 effective_ul_load, max_correlations, redraw_content,
                                 synthesize_overlap, uplink_correlation_factor,
                                 uplink_covariance)
from vralloc.network import Topology, generate_topology

NET = NetworkConfig()


def test_downlink_correlation_examples():
    assert downlink_correlation(100, 100, 0) == 0.0
    assert downlink_correlation(100, 100, 100) == 0.5
    assert downlink_correlation(120, 80, 50) == 0.25
    with pytest.raises(ValueError):
        downlink_correlation(0, 0, 0)


def test_uplink_covariance_examples():
    assert uplink_covariance(2.0, 3.0, 0.0, 2.0, 900.0) == 6.0
    assert uplink_covariance(1.0, 1.0, 1e6, 2.0, 900.0) == 0.0
    assert uplink_covariance(1.0, 1.0, 30.0, 2.0, 900.0) == pytest.approx(0.3679, abs=1e-4)
    assert uplink_correlation_factor(30.0, 2.0, 900.0) == pytest.approx(math.exp(-1))


def test_overlap_all_distinct_content():
    model = synthesize_overlap(np.arange(6), ContentParams(), NET, 0)
    assert np.all(model.phi() == 0)


def test_overlap_forced_full():
    params = ContentParams(overlap_low=1.0, overlap_high=1.0)
    model = synthesize_overlap(np.zeros(5, dtype=int), params, NET, 0)
    phi = model.phi()
    off = ~np.eye(5, dtype=bool)
    assert np.allclose(phi[off], 0.5)


def test_overlap_mean_matches_sampler():
    params = ContentParams(overlap_low=0.2, overlap_high=0.8)
    n = 142  # ~10^4 pairs
    model = synthesize_overlap(np.zeros(n, dtype=int), params, NET, 3)
    phi = model.phi()[np.triu_indices(n, 1)]
    # equal pixel counts: phi = w / 2 with w ~ U[0.2, 0.8]
    expect = 0.5 * 0.5 * (0.2 + 0.8)
    se = 0.5 * (0.6 / math.sqrt(12)) / math.sqrt(len(phi))
    assert abs(phi.mean() - expect) < 4 * se


def test_overlap_invariants_and_determinism():
    ids = np.random.default_rng(0).integers(0, 3, 20)
    a = synthesize_overlap(ids, ContentParams(), NET, 9)
    b = synthesize_overlap(ids, ContentParams(), NET, 9)
    np.testing.assert_array_equal(a.overlap, b.overlap)
    assert np.array_equal(a.overlap, a.overlap.T)
    assert np.all(a.overlap <= np.minimum.outer(a.pixel_count, a.pixel_count))
    assert np.all(a.overlap[ids[:, None] != ids[None, :]] == 0)
    phi = a.phi()
    assert np.all((phi >= 0) & (phi <= 0.5))


def _topology(positions, assoc, content):
    n = len(positions)
    return Topology(sbs_positions=np.zeros((max(assoc) + 1, 2)),
                    user_positions=np.asarray(positions, float),
                    association=np.asarray(assoc), content_id=np.asarray(content),
                    tracking_std=np.ones(n))


def test_singleton_and_colocated_cells():
    topo = _topology([[0, 0], [0, 0], [50, 50]], [0, 0, 1], [0, 0, 0])
    model = synthesize_overlap(topo.content_id, ContentParams(), NET, 1)
    corr = max_correlations(topo, model, NET)
    assert corr.rho_max[0] == 1.0 and corr.rho_max[1] == 1.0
    assert corr.phi_max[2] == 0.0 and corr.rho_max[2] == 0.0


def test_max_correlation_brute_force():
    rng = np.random.default_rng(4)
    pos = rng.uniform(0, 30, (5, 2))
    topo = _topology(pos, [0] * 5, [0, 1, 0, 1, 0])
    model = synthesize_overlap(topo.content_id, ContentParams(), NET, 2)
    corr = max_correlations(topo, model, NET)
    for i in range(5):
        best_phi = max(downlink_correlation(model.pixel_count[i], model.pixel_count[k],
                                            model.overlap[i, k]) for k in range(5) if k != i)
        best_rho = max(math.exp(-np.sum((pos[i] - pos[k]) ** 2) / 900.0)
                       for k in range(5) if k != i)
        assert corr.phi_max[i] == pytest.approx(best_phi)
        assert corr.rho_max[i] == pytest.approx(best_rho)


def test_effective_loads():
    assert effective_dl_load(10e6, 0.0) == 10e6
    assert effective_ul_load(1e5, 1.0) == 0.0
    assert effective_dl_load(10e6, 0.25) == pytest.approx(7.5e6)


@given(st.floats(0, 1e9), st.floats(0, 1), st.floats(0, 1))
def test_loads_monotone_and_bounded(base, c1, c2):
    lo, hi = sorted((c1, c2))
    for f in (effective_dl_load, effective_ul_load):
        assert 0 <= f(base, hi) <= f(base, lo) <= base


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 500))
def test_covariance_symmetric(s1, s2, d):
    assert uplink_covariance(s1, s2, d, 2.0, 900.0) == uplink_covariance(s2, s1, d, 2.0, 900.0)


def test_redraw_content_keeps_geometry():
    topo = generate_topology(NET, 5, num_contents=3)
    new = redraw_content(topo, ContentParams(), 8)
    np.testing.assert_array_equal(new.association, topo.association)
    np.testing.assert_array_equal(new.user_positions, topo.user_positions)
    assert np.all((new.tracking_std >= 0.5) & (new.tracking_std <= 1.5))
