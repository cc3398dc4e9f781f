"""Network geometry, association, block-fading channels, SINR and rates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import NetworkConfig, as_seed_sequence

UNCOVERED = -1
MIN_DISTANCE = 1.0  # m; path loss is clamped below this


@dataclass(frozen=True)
class Topology:
    sbs_positions: np.ndarray  # (B, 2)
    user_positions: np.ndarray  # (U, 2)
    association: np.ndarray  # (U,) SBS index or UNCOVERED
    content_id: np.ndarray  # (U,)
    tracking_std: np.ndarray  # (U,)

    @property
    def num_users(self) -> int:
        return len(self.user_positions)

    @property
    def num_sbs(self) -> int:
        return len(self.sbs_positions)

    def users_of(self, sbs: int) -> np.ndarray:
        return np.flatnonzero(self.association == sbs)

    @property
    def covered(self) -> np.ndarray:
        return np.flatnonzero(self.association != UNCOVERED)

    @property
    def uncovered(self) -> np.ndarray:
        return np.flatnonzero(self.association == UNCOVERED)

    @property
    def active_sbs(self) -> np.ndarray:
        """SBSs with at least one associated user; idle SBSs do not transmit."""
        return np.unique(self.association[self.association != UNCOVERED])

    def distances(self) -> np.ndarray:
        """User-to-SBS distance matrix (U, B) in meters."""
        diff = self.user_positions[:, None, :] - self.sbs_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def user_distances(self) -> np.ndarray:
        diff = self.user_positions[:, None, :] - self.user_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])


@dataclass(frozen=True)
class ChannelRealization:
    dl_gain: np.ndarray  # (U, B, S)
    ul_gain: np.ndarray  # (U, B, V)


def uniform_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    u = rng.random((n, 2))
    r = radius * np.sqrt(u[:, 0])
    theta = 2 * np.pi * u[:, 1]
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def associate_users(user_positions: np.ndarray, sbs_positions: np.ndarray,
                    coverage_radius: float) -> np.ndarray:
    """Nearest SBS within ``coverage_radius``; ties go to the lower SBS index.

    Users with no SBS in range get ``UNCOVERED``.
    """
    user_positions = np.asarray(user_positions, dtype=float).reshape(-1, 2)
    sbs_positions = np.asarray(sbs_positions, dtype=float).reshape(-1, 2)
    assoc = np.full(len(user_positions), UNCOVERED, dtype=int)
    if len(sbs_positions) == 0:
        return assoc
    diff = user_positions[:, None, :] - sbs_positions[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    nearest = np.argmin(d, axis=1)  # first minimum, i.e. lowest index on ties
    in_range = d[np.arange(len(d)), nearest] <= coverage_radius
    assoc[in_range] = nearest[in_range]
    return assoc


def generate_topology(config: NetworkConfig, seed,
                      sbs_positions: Optional[np.ndarray] = None,
                      num_contents: int = 1, tracking_std: float = 1.0) -> Topology:
    """Place users and SBSs uniformly in the deployment disk and associate them.

    User and SBS positions come from independent streams, and SBS positions are
    drawn as a prefix of one sequence, so topologies for different SBS counts
    under the same seed share all user positions and their first SBSs.
    """
    ss = as_seed_sequence(seed)
    users_ss, sbs_ss, content_ss = ss.spawn(3)
    users = uniform_disk(np.random.default_rng(users_ss), config.num_users, config.area_radius)
    if sbs_positions is None:
        sbs = uniform_disk(np.random.default_rng(sbs_ss), config.num_sbs, config.area_radius)
    else:
        sbs = np.asarray(sbs_positions, dtype=float).reshape(-1, 2)
    content = np.random.default_rng(content_ss).integers(0, num_contents, config.num_users)
    return Topology(
        sbs_positions=sbs,
        user_positions=users,
        association=associate_users(users, sbs, config.sbs_coverage_radius),
        content_id=content,
        tracking_std=np.full(config.num_users, float(tracking_std)),
    )


def path_gain(distance: np.ndarray | float, exponent: float) -> np.ndarray:
    return np.maximum(distance, MIN_DISTANCE) ** (-exponent)


def sample_channel(topology: Topology, config: NetworkConfig, seed: int | np.random.SeedSequence
                   ) -> ChannelRealization:
    """Rayleigh block fading: unit-mean exponential power times path loss."""
    rng = np.random.default_rng(seed)
    pl = path_gain(topology.distances(), config.path_loss_exponent)
    n_u, n_b = pl.shape
    dl = rng.exponential(1.0, (n_u, n_b, config.num_downlink_rb)) * pl[..., None]
    ul = rng.exponential(1.0, (n_u, n_b, config.num_uplink_rb)) * pl[..., None]
    return ChannelRealization(dl_gain=dl, ul_gain=ul)


# ---------------------------------------------------------------------------
# scalar reference definitions
#
# ``allocations`` is one entry per SBS: None for an idle SBS, otherwise an
# object with ``dl`` / ``ul`` sequences giving the user served on each RB
# (negative entries mark an unused RB).


def _rb_users(alloc, direction: str) -> Sequence[int]:
    return getattr(alloc, direction)


def sinr_downlink(user: int, sbs: int, rb: int, allocations: Sequence, channel: ChannelRealization,
                  config: NetworkConfig) -> float:
    signal = config.sbs_tx_power * channel.dl_gain[user, sbs, rb]
    interference = 0.0
    for other, alloc in enumerate(allocations):
        if other == sbs or alloc is None:
            continue
        rb_users = _rb_users(alloc, "dl")
        if rb < len(rb_users) and rb_users[rb] >= 0:
            interference += config.sbs_tx_power * channel.dl_gain[user, other, rb]
    return signal / (config.noise_power + interference)


def sinr_uplink(user: int, sbs: int, rb: int, allocations: Sequence, channel: ChannelRealization,
                config: NetworkConfig) -> float:
    signal = config.user_tx_power * channel.ul_gain[user, sbs, rb]
    interference = 0.0
    for other, alloc in enumerate(allocations):
        if other == sbs or alloc is None:
            continue
        rb_users = _rb_users(alloc, "ul")
        if rb < len(rb_users) and rb_users[rb] >= 0:
            interferer = rb_users[rb]
            interference += config.user_tx_power * channel.ul_gain[interferer, sbs, rb]
    return signal / (config.noise_power + interference)


def rate(alloc: Sequence[int] | np.ndarray, sinrs: Sequence[float] | np.ndarray,
         bandwidth: float) -> float:
    """Sum of ``bandwidth * log2(1 + sinr)`` over the allocated RBs."""
    alloc = np.asarray(alloc, dtype=float)
    sinrs = np.asarray(sinrs, dtype=float)
    if alloc.shape != sinrs.shape:
        raise ValueError("allocation and SINR vectors differ in length")
    return float(np.sum(alloc * bandwidth * np.log2(1.0 + sinrs)))


def rate_downlink(alloc, sinrs, config: NetworkConfig) -> float:
    return rate(alloc, sinrs, config.subcarrier_bandwidth)


def rate_uplink(alloc, sinrs, config: NetworkConfig) -> float:
    return rate(alloc, sinrs, config.subcarrier_bandwidth)


# ---------------------------------------------------------------------------
# vectorized forms used by the simulator


def downlink_sinr_matrix(channel: ChannelRealization, association: np.ndarray,
                         active_sbs: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """SINR (U, S) of every covered user towards its serving SBS.

    Every active SBS uses every downlink RB, so the interferer set is the same
    for all allocations.  Uncovered users get NaN.
    """
    n_u = channel.dl_gain.shape[0]
    out = np.full((n_u, channel.dl_gain.shape[2]), np.nan)
    active_mask = np.zeros(channel.dl_gain.shape[1], dtype=bool)
    active_mask[active_sbs] = True
    rx = config.sbs_tx_power * channel.dl_gain  # (U, B, S)
    total = np.sum(rx * active_mask[None, :, None], axis=1)
    for i in np.flatnonzero(association >= 0):
        j = association[i]
        out[i] = rx[i, j] / (config.noise_power + total[i] - rx[i, j])
    return out


def uplink_sinr_matrix(channel: ChannelRealization, sbs: np.ndarray, ul_users: np.ndarray,
                       config: NetworkConfig) -> np.ndarray:
    """SINR (n, V) on each uplink RB of the listed SBSs.

    ``ul_users[l, k]`` is the user SBS ``sbs[l]`` schedules on uplink RB k.
    """
    v = ul_users.shape[1]
    k = np.arange(v)
    # g[l, m, k]: gain of the user scheduled by sbs[l] on RB k towards sbs[m]
    g = channel.ul_gain[ul_users[:, None, :], sbs[None, :, None], k[None, None, :]]
    rx = config.user_tx_power * g
    signal = np.einsum("llk->lk", rx)
    interference = rx.sum(axis=0) - signal
    return signal / (config.noise_power + interference)
