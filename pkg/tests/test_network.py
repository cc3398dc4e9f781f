import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vralloc.config import NetworkConfig
from vralloc.network import (UNCOVERED, ChannelRealization, associate_users,
                             downlink_sinr_matrix, generate_topology, path_gain, rate_downlink,
                             rate_uplink, sample_channel, sinr_downlink, sinr_uplink,
                             uplink_sinr_matrix)

NET = NetworkConfig()


def alloc(dl=(), ul=()):
    return SimpleNamespace(dl=list(dl), ul=list(ul))


def test_topology_deterministic():
    a, b = generate_topology(NET, 7), generate_topology(NET, 7)
    np.testing.assert_array_equal(a.user_positions, b.user_positions)
    np.testing.assert_array_equal(a.sbs_positions, b.sbs_positions)
    np.testing.assert_array_equal(a.association, b.association)


def test_single_cell_covers_everyone():
    net = NetworkConfig(num_sbs=1, sbs_coverage_radius=100.0)
    topo = generate_topology(net, 3, sbs_positions=np.zeros((1, 2)))
    assert np.all(topo.association == 0)


def test_association_is_partition_over_seeds():
    for seed in range(100):
        topo = generate_topology(NET, seed)
        assert np.all(np.linalg.norm(topo.user_positions, axis=1) <= NET.area_radius + 1e-9)
        d = topo.distances()
        for i, j in enumerate(topo.association):
            if j == UNCOVERED:
                assert np.all(d[i] > NET.sbs_coverage_radius)
            else:
                assert d[i, j] <= NET.sbs_coverage_radius
                assert d[i, j] == d[i].min()
        # each user in at most one cell
        cells = [set(topo.users_of(j)) for j in range(topo.num_sbs)]
        assert sum(len(c) for c in cells) == len(topo.covered)


def test_sbs_positions_are_prefix_consistent():
    a = generate_topology(NetworkConfig(num_sbs=3), 11)
    b = generate_topology(NetworkConfig(num_sbs=6), 11)
    np.testing.assert_array_equal(a.sbs_positions, b.sbs_positions[:3])
    np.testing.assert_array_equal(a.user_positions, b.user_positions)


def test_tie_goes_to_lower_index():
    sbs = np.array([[-10.0, 0.0], [10.0, 0.0]])
    assert associate_users(np.zeros((1, 2)), sbs, 30.0)[0] == 0
    assert associate_users(np.zeros((1, 2)), sbs[::-1], 30.0)[0] == 0


def test_boundary_user_uncovered():
    r = 30.0
    assert associate_users(np.array([[r, 0.0]]), np.zeros((1, 2)), r)[0] == 0
    assert associate_users(np.array([[r + 1e-9, 0.0]]), np.zeros((1, 2)), r)[0] == UNCOVERED


def test_hand_association_table():
    sbs = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]])
    users = np.array([[5.0, 5.0], [40.0, 2.0], [26.0, 0.0], [60.0, 60.0], [2.0, 45.0]])
    # distances by hand: u0 -> s0 (7.07); u1 -> s1 (10.2); u2: s0 26, s1 24 -> s1;
    # u3: nearest s1/s2 at 60.8 > 30 -> uncovered; u4 -> s2 (5.4)
    np.testing.assert_array_equal(associate_users(users, sbs, 30.0), [0, 1, 1, UNCOVERED, 2])


def test_path_gain_formula_and_clamp():
    assert path_gain(10.0, 2.0) == pytest.approx(0.01)
    assert path_gain(0.0, 3.0) == 1.0
    assert path_gain(0.5, 3.0) == 1.0


def test_fading_mean_is_one():
    net = NetworkConfig(num_users=50, num_sbs=4, num_downlink_rb=500, num_uplink_rb=1)
    topo = generate_topology(net, 1)
    ch = sample_channel(topo, net, 2)
    norm = ch.dl_gain / path_gain(topo.distances(), net.path_loss_exponent)[..., None]
    assert norm.size == 10 ** 5
    assert norm.mean() == pytest.approx(1.0, abs=0.02)
    assert np.all(ch.dl_gain >= 0) and np.all(ch.ul_gain >= 0)
    ch2 = sample_channel(topo, net, 2)
    np.testing.assert_array_equal(ch.dl_gain, ch2.dl_gain)


def _channel(n_u, n_b, n_rb, seed=0):
    rng = np.random.default_rng(seed)
    return ChannelRealization(dl_gain=rng.uniform(1e-9, 1e-6, (n_u, n_b, n_rb)),
                              ul_gain=rng.uniform(1e-9, 1e-6, (n_u, n_b, n_rb)))


def test_sinr_single_sbs_is_snr():
    ch = _channel(1, 1, 2)
    got = sinr_downlink(0, 0, 1, [alloc([0, 0])], ch, NET)
    assert got == NET.sbs_tx_power * ch.dl_gain[0, 0, 1] / NET.noise_power
    got = sinr_uplink(0, 0, 1, [alloc(ul=[0, 0])], ch, NET)
    assert got == NET.user_tx_power * ch.ul_gain[0, 0, 1] / NET.noise_power


def test_sinr_symmetric_interferer():
    h = 1e-7
    ch = ChannelRealization(dl_gain=np.full((2, 2, 1), h), ul_gain=np.full((2, 2, 1), h))
    allocs = [alloc([0], [0]), alloc([1], [1])]
    p = NET.sbs_tx_power
    assert sinr_downlink(0, 0, 0, allocs, ch, NET) == pytest.approx(p * h / (NET.noise_power + p * h))
    q = NET.user_tx_power
    assert sinr_uplink(0, 0, 0, allocs, ch, NET) == pytest.approx(q * h / (NET.noise_power + q * h))


def test_sinr_four_sbs_hand_sum():
    ch = _channel(4, 4, 3, seed=5)
    allocs = [alloc([0, 0, 0], [0, 0, 0]), alloc([1, -1, 1], [1, -1, 1]),
              alloc([2, 2, -1], [2, 2, -1]), None]
    k = 0
    interf = sum(NET.sbs_tx_power * ch.dl_gain[0, l, k] for l in (1, 2))
    expect = NET.sbs_tx_power * ch.dl_gain[0, 0, k] / (NET.noise_power + interf)
    assert sinr_downlink(0, 0, k, allocs, ch, NET) == pytest.approx(expect, rel=1e-12)
    k = 2  # only SBS 1 uses RB 2; its user 1 interferes towards SBS 0
    interf = NET.user_tx_power * ch.ul_gain[1, 0, k]
    expect = NET.user_tx_power * ch.ul_gain[0, 0, k] / (NET.noise_power + interf)
    assert sinr_uplink(0, 0, k, allocs, ch, NET) == pytest.approx(expect, rel=1e-12)


def test_rates():
    assert rate_downlink([0, 0, 0], [1.0, 2.0, 3.0], NET) == 0.0
    assert rate_downlink([1], [3.0], NET) == pytest.approx(4e6)
    sinrs = [0.5, 3.0, 7.0, 0.0, 15.0]
    s = [1, 0, 1, 1, 1]
    expect = sum(si * 2e6 * math.log2(1 + g) for si, g in zip(s, sinrs))
    assert rate_uplink(s, sinrs, NET) == pytest.approx(expect, rel=1e-12)


@given(st.lists(st.booleans(), min_size=5, max_size=5), st.integers(0, 4),
       st.lists(st.floats(0, 100), min_size=5, max_size=5))
def test_rate_monotone_in_rb_set(mask, extra, sinrs):
    bigger = list(mask)
    bigger[extra] = True
    assert rate_downlink(bigger, sinrs, NET) >= rate_downlink(mask, sinrs, NET)


@given(st.integers(0, 2**31 - 1))
def test_extra_interferer_never_raises_sinr(seed):
    ch = _channel(3, 3, 2, seed)
    base = [alloc([0, 0], [0, 0]), alloc([1, -1], [1, -1]), None]
    more = [alloc([0, 0], [0, 0]), alloc([1, -1], [1, -1]), alloc([2, 2], [2, 2])]
    for k in range(2):
        assert sinr_downlink(0, 0, k, more, ch, NET) <= sinr_downlink(0, 0, k, base, ch, NET)
        assert sinr_uplink(0, 0, k, more, ch, NET) <= sinr_uplink(0, 0, k, base, ch, NET)


def test_vectorized_sinr_matches_scalar():
    net = NetworkConfig(num_users=12, num_sbs=3, sbs_coverage_radius=100.0)
    topo = generate_topology(net, 4)
    ch = sample_channel(topo, net, 5)
    active = topo.active_sbs
    rng = np.random.default_rng(0)
    allocs = [None] * topo.num_sbs
    for j in active:
        users = topo.users_of(j)
        allocs[j] = alloc(rng.choice(users, net.num_downlink_rb), rng.choice(users, net.num_uplink_rb))
    dl = downlink_sinr_matrix(ch, topo.association, active, net)
    for i in topo.covered:
        for k in range(net.num_downlink_rb):
            assert dl[i, k] == pytest.approx(sinr_downlink(i, topo.association[i], k, allocs, ch, net))
    ul_users = np.stack([allocs[j].ul for j in active])
    ul = uplink_sinr_matrix(ch, active, ul_users, net)
    for p, j in enumerate(active):
        for k in range(net.num_uplink_rb):
            assert ul[p, k] == pytest.approx(sinr_uplink(ul_users[p, k], j, k, allocs, ch, net))
