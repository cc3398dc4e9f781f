"""SBS actions, the per-period resource-allocation game and equilibrium tools."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import qos
from .config import NetworkConfig
from .network import ChannelRealization, Topology, downlink_sinr_matrix, uplink_sinr_matrix

EXACT_JOINT_LIMIT = 1_000_000


@dataclass(frozen=True)
class Action:
    """One SBS's joint allocation.

    ``dl[k]`` / ``ul[k]`` is the user served on downlink / uplink RB k and
    ``levels[n]`` the number of compute quanta given to ``users[n]``.
    """

    users: tuple[int, ...]
    dl: tuple[int, ...]
    ul: tuple[int, ...]
    levels: tuple[int, ...]
    compute: tuple[float, ...]


def compute_levels_for(num_users: int, levels: int) -> int:
    # every user needs at least one quantum
    return max(levels, num_users)


def compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    """Ordered ways to write ``total`` as ``parts`` positive integers, lexicographic."""
    if parts < 1 or total < parts:
        return []
    out = []
    for cuts in itertools.combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)
        out.append(tuple(b - a for a, b in zip(bounds, bounds[1:])))
    return out


def action_space_size(num_users: int, num_dl: int, num_ul: int, levels: int) -> int:
    if num_users == 0:
        return 0
    m = compute_levels_for(num_users, levels)
    return num_users ** num_dl * num_users ** num_ul * math.comb(m - 1, num_users - 1)


def fair_action(users: Sequence[int], num_dl: int, num_ul: int, levels: int,
                capacity: float) -> Action:
    """Round-robin RBs and an equal (as far as quanta allow) compute split."""
    users = tuple(int(u) for u in users)
    n = len(users)
    m = compute_levels_for(n, levels)
    lv = tuple(m // n + (1 if idx < m % n else 0) for idx in range(n))
    return Action(
        users=users,
        dl=tuple(users[k % n] for k in range(num_dl)),
        ul=tuple(users[k % n] for k in range(num_ul)),
        levels=lv,
        compute=tuple(q * capacity / m for q in lv),
    )


def enumerate_actions(users: Sequence[int], config: NetworkConfig, cap: int,
                      seed: int | np.random.SeedSequence = 0) -> list[Action]:
    """Action set of one SBS.

    The full space is every assignment of each RB (both directions) to one of
    the SBS's users times every positive compute split in quanta of c/M.  It is
    enumerated in canonical order (downlink digits most significant, then
    uplink, then compute splits lexicographically) when it has at most ``cap``
    actions.  Otherwise ``cap`` distinct actions are sampled uniformly without
    replacement, with the fair action always first.  An SBS without users has
    no actions.
    """
    users = tuple(int(u) for u in users)
    n = len(users)
    if n == 0:
        return []
    s, v = config.num_downlink_rb, config.num_uplink_rb
    m = compute_levels_for(n, config.compute_levels)
    comps = compositions(m, n)
    n_dl, n_ul = n ** s, n ** v
    size = n_dl * n_ul * len(comps)
    unit = config.compute_capacity / m

    def digits(index: int, width: int) -> tuple[int, ...]:
        out = []
        for _ in range(width):
            index, d = divmod(index, n)
            out.append(d)
        return tuple(reversed(out))

    def decode(index: int) -> Action:
        dl_idx, rest = divmod(index, n_ul * len(comps))
        ul_idx, comp_idx = divmod(rest, len(comps))
        lv = comps[comp_idx]
        return Action(
            users=users,
            dl=tuple(users[d] for d in digits(dl_idx, s)),
            ul=tuple(users[d] for d in digits(ul_idx, v)),
            levels=lv,
            compute=tuple(q * unit for q in lv),
        )

    def encode(action: Action) -> int:
        pos = {u: idx for idx, u in enumerate(users)}
        dl_idx = 0
        for u in action.dl:
            dl_idx = dl_idx * n + pos[u]
        ul_idx = 0
        for u in action.ul:
            ul_idx = ul_idx * n + pos[u]
        return (dl_idx * n_ul + ul_idx) * len(comps) + comps.index(action.levels)

    if size <= cap:
        return [decode(idx) for idx in range(size)]

    fair = fair_action(users, s, v, config.compute_levels, config.compute_capacity)
    fair_idx = encode(fair)
    rng = np.random.default_rng(seed)
    picks = rng.choice(size - 1, size=cap - 1, replace=False)
    picks = [int(p) + (1 if p >= fair_idx else 0) for p in picks]
    return [fair] + [decode(p) for p in picks]


def check_action(action: Action, users: Sequence[int], config: NetworkConfig) -> None:
    """Raise ``ValueError`` unless ``action`` is a valid allocation for ``users``."""
    users = tuple(int(u) for u in users)
    if action.users != users:
        raise ValueError("action lists different users than the SBS serves")
    if len(action.dl) != config.num_downlink_rb or len(action.ul) != config.num_uplink_rb:
        raise ValueError("every RB must be assigned")
    if not set(action.dl) <= set(users) or not set(action.ul) <= set(users):
        raise ValueError("RB assigned to a user of another SBS")
    m = compute_levels_for(len(users), config.compute_levels)
    if sum(action.levels) != m or min(action.levels) < 1:
        raise ValueError("compute quanta must be positive and sum to the capacity")
    if not math.isclose(sum(action.compute), config.compute_capacity, rel_tol=1e-9):
        raise ValueError("compute shares must sum to the capacity")


# ---------------------------------------------------------------------------
# one period of the game


@dataclass
class SlotOutcome:
    sbs_utility: np.ndarray  # (num active SBSs,)
    user_utility: np.ndarray  # (U,) NaN for uncovered users
    dl_delay: np.ndarray  # (U,)
    ul_delay: np.ndarray  # (U,)


class PeriodContext:
    """Static state of one period: channel, loads, maximum delays and action sets.

    Players are the active SBSs (those with users), indexed in ascending SBS
    order.  Within a period nothing changes, so the time-averaged SBS utility
    equals the single-slot value.
    """

    def __init__(self, config: NetworkConfig, topology: Topology, channel: ChannelRealization,
                 dl_bits: np.ndarray, ul_bits: np.ndarray,
                 action_sets: dict[int, list[Action]]):
        self.config = config
        self.topology = topology
        self.channel = channel
        self.dl_bits = np.asarray(dl_bits, dtype=float)
        self.ul_bits = np.asarray(ul_bits, dtype=float)
        self.players = np.array(sorted(j for j, acts in action_sets.items() if acts), dtype=int)
        self.action_sets = [action_sets[j] for j in self.players]
        self.users = [topology.users_of(j) for j in self.players]

        levels = np.full(topology.num_users, config.compute_levels)
        for users in self.users:
            levels[users] = compute_levels_for(len(users), config.compute_levels)
        self.dmax_dl, self.dmax_ul = qos.max_delays(channel, topology, config, levels)

        bw = config.subcarrier_bandwidth
        dl_sinr = downlink_sinr_matrix(channel, topology.association, self.players, config)
        dl_rb_rate = bw * np.log2(1.0 + np.nan_to_num(dl_sinr))

        self._dl_assign, self._ul_assign, self._compute = [], [], []
        self._dl_delay, self._dl_util = [], []
        for users, acts in zip(self.users, self.action_sets):
            dl_a = np.array([a.dl for a in acts], dtype=int)
            ul_a = np.array([a.ul for a in acts], dtype=int)
            comp = np.array([a.compute for a in acts], dtype=float)
            # downlink interference does not depend on anyone's action
            onehot = dl_a[:, None, :] == users[None, :, None]  # (A, n, S)
            rates = np.einsum("ank,nk->an", onehot, dl_rb_rate[users])
            d_dl = qos.downlink_delay(np.broadcast_to(self.dl_bits[users], rates.shape), rates,
                                      config.backhaul_share)
            self._dl_assign.append(dl_a)
            self._ul_assign.append(ul_a)
            self._compute.append(comp)
            self._dl_delay.append(d_dl)
            self._dl_util.append(qos.utility_dl(d_dl, self.dmax_dl[users], config.max_delay_dl))

    @property
    def num_players(self) -> int:
        return len(self.players)

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.action_sets)

    def evaluate(self, joint: Sequence[int]) -> SlotOutcome:
        """Delays and utilities for one action index per player."""
        cfg = self.config
        n_u = self.topology.num_users
        dl_delay = np.full(n_u, np.nan)
        ul_delay = np.full(n_u, np.nan)
        user_u = np.full(n_u, np.nan)
        sbs_u = np.zeros(self.num_players)
        if self.num_players == 0:
            return SlotOutcome(sbs_u, user_u, dl_delay, ul_delay)

        ul_users = np.stack([self._ul_assign[p][a] for p, a in enumerate(joint)])
        sinr = uplink_sinr_matrix(self.channel, self.players, ul_users, cfg)
        rb_rate = cfg.subcarrier_bandwidth * np.log2(1.0 + sinr)
        for p, a in enumerate(joint):
            users = self.users[p]
            onehot = ul_users[p][None, :] == users[:, None]
            ul_rate = onehot @ rb_rate[p]
            d_ul = qos.uplink_delay(self.ul_bits[users], ul_rate, self._compute[p][a])
            u_ul = qos.utility_ul(d_ul, self.dmax_ul[users], cfg.max_delay_ul)
            u = self._dl_util[p][a] * u_ul
            dl_delay[users] = self._dl_delay[p][a]
            ul_delay[users] = d_ul
            user_u[users] = u
            sbs_u[p] = u.sum()
        return SlotOutcome(sbs_u, user_u, dl_delay, ul_delay)

    def sbs_utilities(self, joint: Sequence[int]) -> np.ndarray:
        return self.evaluate(joint).sbs_utility

    def actions_of(self, joint: Sequence[int]) -> list[Optional[Action]]:
        """Per-SBS allocation list (None for idle SBSs), for the scalar SINR helpers."""
        out: list[Optional[Action]] = [None] * self.topology.num_sbs
        for p, a in enumerate(joint):
            out[self.players[p]] = self.action_sets[p][a]
        return out

    def game_spec(self) -> "GameSpec":
        return GameSpec(self.action_counts, self.sbs_utilities)


def sbs_utility(context: PeriodContext, joint: Sequence[int]) -> np.ndarray:
    """Per-SBS utility: the sum of the users' total utilities."""
    return context.sbs_utilities(joint)


# ---------------------------------------------------------------------------
# mixed strategies and equilibria


class GameSpec:
    """Finite normal-form game given by its action counts and a utility oracle."""

    def __init__(self, action_counts: Sequence[int],
                 utility: Callable[[tuple[int, ...]], np.ndarray]):
        self.action_counts = tuple(int(c) for c in action_counts)
        if any(c < 1 for c in self.action_counts):
            raise ValueError("every player needs a nonempty action set")
        self.utility = utility
        self._tensor: Optional[np.ndarray] = None

    @classmethod
    def from_tensor(cls, payoffs: np.ndarray) -> "GameSpec":
        """``payoffs[a_1, ..., a_n, j]`` is player j's utility."""
        payoffs = np.asarray(payoffs, dtype=float)
        spec = cls(payoffs.shape[:-1], lambda joint: payoffs[tuple(joint)])
        spec._tensor = payoffs
        return spec

    @classmethod
    def bimatrix(cls, a: np.ndarray, b: np.ndarray) -> "GameSpec":
        return cls.from_tensor(np.stack([np.asarray(a, float), np.asarray(b, float)], axis=-1))

    @property
    def num_players(self) -> int:
        return len(self.action_counts)

    @property
    def joint_size(self) -> int:
        return math.prod(self.action_counts)

    def payoff_tensor(self) -> np.ndarray:
        if self._tensor is None:
            if self.joint_size > EXACT_JOINT_LIMIT:
                raise ValueError("joint action space too large to tabulate")
            t = np.empty(self.action_counts + (self.num_players,))
            for joint in itertools.product(*(range(c) for c in self.action_counts)):
                t[joint] = self.utility(joint)
            self._tensor = t
        return self._tensor


def check_strategy(probs: np.ndarray, num_actions: int, atol: float = 1e-9) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (num_actions,):
        raise ValueError(f"strategy has shape {probs.shape}, expected ({num_actions},)")
    if np.any(probs < -atol) or abs(probs.sum() - 1.0) > atol:
        raise ValueError("strategy is not a probability vector")
    return probs


def _contract_others(tensor: np.ndarray, strategies: Sequence[np.ndarray], keep: int) -> np.ndarray:
    """Contract every player axis except ``keep``; result is (A_keep, n_players)."""
    out = tensor
    for axis in reversed(range(len(strategies))):
        if axis == keep:
            continue
        # the payoff axis stays last; lower player axes keep their positions
        out = np.tensordot(out, strategies[axis], axes=([axis], [0]))
    return out


def expected_utility(strategies: Sequence[np.ndarray], spec: GameSpec, method: str = "auto",
                     samples: int = 20_000, rng: Optional[np.random.Generator] = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Per-player expected utility and its standard error (zero when exact)."""
    strategies = [check_strategy(s, c) for s, c in zip(strategies, spec.action_counts)]
    if method == "auto":
        method = "exact" if spec.joint_size <= EXACT_JOINT_LIMIT else "mc"
    if method == "exact":
        values = _contract_others(spec.payoff_tensor(), strategies, keep=-1)
        return values, np.zeros(spec.num_players)
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    rng = rng or np.random.default_rng(0)
    draws = np.stack([rng.choice(len(s), size=samples, p=s) for s in strategies], axis=1)
    vals = np.array([spec.utility(tuple(row)) for row in draws])
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(samples)


def deviation_payoffs(strategies: Sequence[np.ndarray], spec: GameSpec, player: int) -> np.ndarray:
    """Player's utility for each of its pure actions against the others' mixtures."""
    return _contract_others(spec.payoff_tensor(), strategies, keep=player)[:, player]


def is_epsilon_ne(strategies: Sequence[np.ndarray], spec: GameSpec, eps: float
                  ) -> tuple[bool, float]:
    """Check the equilibrium condition against pure deviations.

    Expected utility is linear in a player's own mixture, so no mixed
    deviation beats the best pure one.  Returns the verdict and the largest
    deviation gain over all players.
    """
    strategies = [check_strategy(s, c) for s, c in zip(strategies, spec.action_counts)]
    worst = -np.inf
    for j in range(spec.num_players):
        dev = deviation_payoffs(strategies, spec, j)
        worst = max(worst, float(dev.max() - dev @ strategies[j]))
    return worst <= eps, worst


def _indifference(payoff: np.ndarray, rows: tuple[int, ...], cols: tuple[int, ...]
                  ) -> Optional[np.ndarray]:
    """Mixture over ``cols`` making every row in ``rows`` equally good, if any."""
    sub = payoff[np.ix_(rows, cols)]
    k_r, k_c = sub.shape
    lhs = np.zeros((k_r + 1, k_c + 1))
    lhs[:k_r, :k_c] = sub
    lhs[:k_r, k_c] = -1.0
    lhs[k_r, :k_c] = 1.0
    rhs = np.zeros(k_r + 1)
    rhs[k_r] = 1.0
    sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if np.max(np.abs(lhs @ sol - rhs)) > 1e-9:
        return None
    probs = sol[:k_c]
    if np.any(probs < -1e-12):
        return None
    return np.clip(probs, 0.0, None) / np.clip(probs, 0.0, None).sum()


def brute_force_ne(spec: GameSpec, tol: float = 1e-9) -> list[np.ndarray]:
    """One mixed equilibrium of a small two-player game by support enumeration.

    Support pairs are tried in order of total size, then lexicographically, and
    the first pair whose indifference systems have a nonnegative solution that
    passes the equilibrium check is returned.
    """
    if spec.num_players != 2 or max(spec.action_counts) > 4:
        raise ValueError("brute_force_ne handles two players with at most four actions")
    t = spec.payoff_tensor()
    a, b = t[..., 0], t[..., 1]
    n1, n2 = spec.action_counts
    pairs = [(i, j) for k1 in range(1, n1 + 1) for i in itertools.combinations(range(n1), k1)
             for k2 in range(1, n2 + 1) for j in itertools.combinations(range(n2), k2)]
    pairs.sort(key=lambda p: (len(p[0]) + len(p[1]), p[0], p[1]))
    for rows, cols in pairs:
        y = _indifference(a, rows, cols)
        if y is None:
            continue
        x = _indifference(b.T, cols, rows)
        if x is None:
            continue
        px = np.zeros(n1)
        px[list(rows)] = x
        py = np.zeros(n2)
        py[list(cols)] = y
        ok, _ = is_epsilon_ne([px, py], spec, tol * max(1.0, float(np.abs(t).max())))
        if ok:
            return [px, py]
    raise RuntimeError("support enumeration found no equilibrium (solver bug)")
