"""Delay model, normalized delay utilities and the resource-gain formulas."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import NetworkConfig
from .network import ChannelRealization, Topology


class TheoremDomainError(ValueError):
    """The gain formulas only hold while both utilities are in their linear region."""


@dataclass(frozen=True)
class DelayBreakdown:
    dl_air: float
    dl_backhaul: float
    ul_air: float
    ul_compute: float

    @property
    def downlink(self) -> float:
        return self.dl_air + self.dl_backhaul

    @property
    def uplink(self) -> float:
        return self.ul_air + self.ul_compute


@dataclass(frozen=True)
class UtilityPoint:
    u_dl: float
    u_ul: float
    u_total: float
    dmax_dl: float
    dmax_ul: float


def _transfer_time(bits, rate):
    bits = np.asarray(bits, dtype=float)
    rate = np.asarray(rate, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = bits / rate
    # nothing to send takes no time, even on a dead link
    return np.where(bits == 0, 0.0, np.where(rate > 0, t, np.inf))


def downlink_delay(bits, rate, backhaul_share):
    """Air time from the SBS plus backhaul time from the cloud; inf on a zero rate."""
    out = _transfer_time(bits, rate) + _transfer_time(bits, backhaul_share)
    return float(out) if np.ndim(out) == 0 else out


def uplink_delay(bits, rate, compute):
    """Air time to the SBS plus processing time at the allocated compute share."""
    out = _transfer_time(bits, rate) + _transfer_time(bits, compute)
    return float(out) if np.ndim(out) == 0 else out


def delay_breakdown(dl_bits, dl_rate, backhaul_share, ul_bits, ul_rate, compute) -> DelayBreakdown:
    return DelayBreakdown(
        dl_air=float(_transfer_time(dl_bits, dl_rate)),
        dl_backhaul=float(_transfer_time(dl_bits, backhaul_share)),
        ul_air=float(_transfer_time(ul_bits, ul_rate)),
        ul_compute=float(_transfer_time(ul_bits, compute)),
    )


def delay_utility(delay, dmax, threshold):
    """Linear utility between the tolerable delay (1) and the maximum delay (0).

    Delays at or below ``threshold`` score 1; anything past ``dmax`` (including
    the infinite delay of a starved user) is clamped to 0.
    """
    delay = np.asarray(delay, dtype=float)
    dmax = np.asarray(dmax, dtype=float)
    span = dmax - threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.where(span > 0, (dmax - delay) / span, 0.0)
    u = np.where(delay <= threshold, 1.0, np.clip(lin, 0.0, 1.0))
    u = np.where(np.isfinite(delay), u, 0.0)
    return float(u) if u.ndim == 0 else u


def utility_dl(delay, dmax, gamma_dl):
    return delay_utility(delay, dmax, gamma_dl)


def utility_ul(delay, dmax, gamma_ul):
    return delay_utility(delay, dmax, gamma_ul)


def utility_total(u_dl, u_ul):
    out = np.asarray(u_dl) * np.asarray(u_ul)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# maximum delays


def full_interference_sinr(channel: ChannelRealization, topology: Topology,
                           config: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Worst-case per-RB SINRs (U, S) and (U, V) with every other SBS co-channel.

    Downlink: every active SBS transmits on every RB.  Uplink: each other
    active SBS schedules its strongest interferer (towards the serving SBS) on
    every RB.  Uncovered users get NaN.
    """
    assoc = topology.association
    active = topology.active_sbs
    n_u = topology.num_users
    dl = np.full((n_u, config.num_downlink_rb), np.nan)
    ul = np.full((n_u, config.num_uplink_rb), np.nan)
    rx_dl = config.sbs_tx_power * channel.dl_gain
    worst_ul_interf = np.zeros((topology.num_sbs, config.num_uplink_rb))
    for j in active:
        for l in active:
            if l == j:
                continue
            users_l = topology.users_of(l)
            worst_ul_interf[j] += config.user_tx_power * channel.ul_gain[users_l, j, :].max(axis=0)
    for i in topology.covered:
        j = assoc[i]
        interf = rx_dl[i, active].sum(axis=0) - rx_dl[i, j]
        dl[i] = rx_dl[i, j] / (config.noise_power + interf)
        ul[i] = config.user_tx_power * channel.ul_gain[i, j] / (config.noise_power + worst_ul_interf[j])
    return dl, ul


def max_delays(channel: ChannelRealization, topology: Topology, config: NetworkConfig,
               compute_levels=None) -> tuple[np.ndarray, np.ndarray]:
    """Maximum downlink and uplink delays (U,) at zero correlation.

    The worst feasible allocation is the single worst RB under full
    interference and, on the uplink, the smallest compute share.
    """
    levels = config.compute_levels if compute_levels is None else np.asarray(compute_levels)
    dl_sinr, ul_sinr = full_interference_sinr(channel, topology, config)
    bw = config.subcarrier_bandwidth
    worst_dl_rate = bw * np.log2(1.0 + np.min(dl_sinr, axis=1, initial=np.inf,
                                              where=~np.isnan(dl_sinr)))
    worst_ul_rate = bw * np.log2(1.0 + np.min(ul_sinr, axis=1, initial=np.inf,
                                              where=~np.isnan(ul_sinr)))
    dmax_dl = downlink_delay(np.full(topology.num_users, config.base_dl_bits), worst_dl_rate,
                             config.backhaul_share)
    dmax_ul = uplink_delay(np.full(topology.num_users, config.base_ul_bits), worst_ul_rate,
                           config.compute_capacity / levels)
    covered = topology.association >= 0
    return np.where(covered, dmax_dl, np.nan), np.where(covered, dmax_ul, np.nan)


def max_delay_dl(user: int, channel: ChannelRealization, topology: Topology,
                 config: NetworkConfig) -> float:
    return float(max_delays(channel, topology, config)[0][user])


def max_delay_ul(user: int, channel: ChannelRealization, topology: Topology,
                 config: NetworkConfig, compute_levels: int | None = None) -> float:
    return float(max_delays(channel, topology, config, compute_levels)[1][user])


# ---------------------------------------------------------------------------
# utility gains from extra resources


@dataclass(frozen=True)
class GainContext:
    """Operating point of one user for the resource-gain formulas."""

    dl_bits: float
    ul_bits: float
    dl_rate: float
    ul_rate: float
    compute: float
    backhaul_share: float
    dmax_dl: float
    dmax_ul: float
    gamma_dl: float
    gamma_ul: float

    def delays(self) -> tuple[float, float]:
        return (downlink_delay(self.dl_bits, self.dl_rate, self.backhaul_share),
                uplink_delay(self.ul_bits, self.ul_rate, self.compute))

    def utilities(self) -> tuple[float, float]:
        d_dl, d_ul = self.delays()
        return (utility_dl(d_dl, self.dmax_dl, self.gamma_dl),
                utility_ul(d_ul, self.dmax_ul, self.gamma_ul))

    def total(self) -> float:
        return utility_total(*self.utilities())

    def check_linear(self) -> None:
        d_dl, d_ul = self.delays()
        if not (self.gamma_dl <= d_dl <= self.dmax_dl and self.gamma_ul <= d_ul <= self.dmax_ul):
            raise TheoremDomainError("theorem out of domain: a utility is clamped")


@dataclass(frozen=True)
class GainResult:
    exact: float
    formula: float
    regime: str  # "much-larger", "much-smaller" or "general"


def _regime(ratio: float, large: float, small: float) -> str:
    # boundaries are inclusive up to rounding of extra / base
    if ratio >= large * (1 - 1e-12):
        return "much-larger"
    if ratio <= small * (1 + 1e-12):
        return "much-smaller"
    return "general"


def _rate_gain_term(base_rate: float, extra_rate: float, regime: str) -> float:
    if regime == "much-larger":
        return 1.0 / base_rate
    if regime == "much-smaller":
        return extra_rate / base_rate ** 2
    return extra_rate / (base_rate ** 2 + base_rate * extra_rate)


def gain_ul_rb(extra_rate: float, ctx: GainContext, large: float = 100.0,
               small: float = 0.01) -> GainResult:
    """Utility gain from uplink RBs adding ``extra_rate`` to the uplink rate."""
    after = replace(ctx, ul_rate=ctx.ul_rate + extra_rate)
    ctx.check_linear()
    after.check_linear()
    regime = _regime(extra_rate / ctx.ul_rate, large, small)
    u_dl, _ = ctx.utilities()
    x = _rate_gain_term(ctx.ul_rate, extra_rate, regime)
    formula = u_dl * ctx.ul_bits * x / (ctx.dmax_ul - ctx.gamma_ul)
    return GainResult(exact=after.total() - ctx.total(), formula=formula, regime=regime)


def gain_dl_rb(extra_rate: float, ctx: GainContext, large: float = 100.0,
               small: float = 0.01) -> GainResult:
    """Utility gain from downlink RBs adding ``extra_rate`` to the downlink rate."""
    after = replace(ctx, dl_rate=ctx.dl_rate + extra_rate)
    ctx.check_linear()
    after.check_linear()
    regime = _regime(extra_rate / ctx.dl_rate, large, small)
    _, u_ul = ctx.utilities()
    x = _rate_gain_term(ctx.dl_rate, extra_rate, regime)
    formula = u_ul * ctx.dl_bits * x / (ctx.dmax_dl - ctx.gamma_dl)
    return GainResult(exact=after.total() - ctx.total(), formula=formula, regime=regime)


def gain_compute(extra_compute: float, ctx: GainContext) -> float:
    """Closed-form utility gain from ``extra_compute`` more compute for the user."""
    ctx.check_linear()
    replace(ctx, compute=ctx.compute + extra_compute).check_linear()
    u_dl, _ = ctx.utilities()
    m = ctx.compute
    return u_dl * ctx.ul_bits * extra_compute / ((ctx.dmax_ul - ctx.gamma_ul)
                                                 * (m * (m + extra_compute)))
