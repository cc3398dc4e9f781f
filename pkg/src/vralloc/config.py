"""Configuration types and the flat ``key = value`` config-file loader.

All physical quantities are stored in SI units (W, Hz, bit/s, m, s).  Power
values given in dBm are converted exactly once, when the config is built.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Raised for malformed or physically invalid configuration."""


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, a sequence of ints or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


@dataclass(frozen=True)
class NetworkConfig:
    area_radius: float = 100.0
    sbs_coverage_radius: float = 30.0
    num_users: int = 25
    num_sbs: int = 4
    subcarrier_bandwidth: float = 2e6
    num_downlink_rb: int = 5
    num_uplink_rb: int = 5
    sbs_tx_power: float = dbm_to_watt(20.0)
    user_tx_power: float = dbm_to_watt(20.0)
    noise_power: float = dbm_to_watt(-95.0)
    path_loss_exponent: float = 3.0
    backhaul_total: float = 100e9
    compute_capacity: float = 10e6
    compute_levels: int = 5
    corr_dist_exponent: float = 2.0
    corr_dist_scale: float = 900.0
    max_delay_dl: float = 0.020
    max_delay_ul: float = 0.010
    period_length: int = 300
    # per-user payloads: VR stream rate times the period duration
    vr_rate: float = 25.32e6
    period_duration: float = 0.1
    uplink_ratio: float = 0.01

    @property
    def backhaul_share(self) -> float:
        """Per-user backhaul rate: the total split equally over all users."""
        return self.backhaul_total / self.num_users

    @property
    def base_dl_bits(self) -> float:
        return self.vr_rate * self.period_duration

    @property
    def base_ul_bits(self) -> float:
        return self.base_dl_bits * self.uplink_ratio

    def validate(self) -> None:
        positive = [
            "area_radius", "sbs_coverage_radius", "subcarrier_bandwidth",
            "sbs_tx_power", "user_tx_power", "noise_power", "path_loss_exponent",
            "backhaul_total", "compute_capacity", "corr_dist_exponent",
            "corr_dist_scale", "max_delay_dl", "max_delay_ul", "vr_rate",
            "period_duration", "uplink_ratio",
        ]
        for name in positive:
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
        counts = ["num_users", "num_sbs", "num_downlink_rb", "num_uplink_rb",
                  "compute_levels", "period_length"]
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)!r}")
        if self.sbs_coverage_radius > self.area_radius:
            raise ConfigError("sbs_coverage_radius must not exceed area_radius")
        # The maximum delays are channel dependent; the cell-edge, unit-fading,
        # noise-only single-RB link with the smallest compute share is a lower
        # bound on them.  Thresholds at or above it leave no linear utility region.
        edge_gain = self.sbs_coverage_radius ** (-self.path_loss_exponent)
        dl_rate = self.subcarrier_bandwidth * math.log2(
            1 + self.sbs_tx_power * edge_gain / self.noise_power)
        ul_rate = self.subcarrier_bandwidth * math.log2(
            1 + self.user_tx_power * edge_gain / self.noise_power)
        dl_bound = self.base_dl_bits / dl_rate + self.base_dl_bits / self.backhaul_share
        ul_bound = (self.base_ul_bits / ul_rate
                    + self.base_ul_bits * self.compute_levels / self.compute_capacity)
        if dl_bound <= self.max_delay_dl:
            raise ConfigError(
                f"max_delay_dl={self.max_delay_dl} s is not below the worst-case "
                f"downlink delay bound {dl_bound:.4g} s")
        if ul_bound <= self.max_delay_ul:
            raise ConfigError(
                f"max_delay_ul={self.max_delay_ul} s is not below the worst-case "
                f"uplink delay bound {ul_bound:.4g} s")


@dataclass(frozen=True)
class ContentParams:
    num_contents: int = 3
    pixels_per_user: int = 1_000_000
    overlap_low: float = 0.2
    overlap_high: float = 0.8
    tracking_std: float = 1.0

    def validate(self) -> None:
        if self.num_contents < 1:
            raise ConfigError("num_contents must be >= 1")
        if self.pixels_per_user < 1:
            raise ConfigError("pixels_per_user must be >= 1")
        if not 0.0 <= self.overlap_low <= self.overlap_high <= 1.0:
            raise ConfigError("need 0 <= overlap_low <= overlap_high <= 1")
        if self.tracking_std <= 0:
            raise ConfigError("tracking_std must be positive")


@dataclass(frozen=True)
class LearnerParams:
    reservoir_size: int = 1000
    spectral_radius: float = 0.9
    learning_rate: float = 0.03
    transfer_learning_rate: float = 0.3
    # target mean LMS step lr * ||state||^2; W_in is calibrated to it (stable below 2)
    lms_step: float = 1.0
    q_step_size: float = 0.1
    epsilon_start: float = 0.5
    epsilon_decay: float = 0.995
    epsilon_floor: float = 0.01
    washout: int = 10

    def validate(self) -> None:
        if self.reservoir_size < 1:
            raise ConfigError("reservoir_size must be >= 1")
        if not 0 < self.spectral_radius < 1:
            raise ConfigError("spectral_radius must lie in (0, 1)")
        for name in ("learning_rate", "transfer_learning_rate"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.lms_step < 2:
            raise ConfigError("lms_step must lie in (0, 2) for a stable readout")
        if not 0 < self.q_step_size <= 1:
            raise ConfigError("q_step_size must lie in (0, 1]")
        for name in ("epsilon_start", "epsilon_floor"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0 < self.epsilon_decay <= 1:
            raise ConfigError("epsilon_decay must lie in (0, 1]")
        if self.washout < 0:
            raise ConfigError("washout must be >= 0")


LEARNERS = ("esn-transfer", "esn-plain", "q-corr", "q-nocorr")


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    content: ContentParams = field(default_factory=ContentParams)
    learning: LearnerParams = field(default_factory=LearnerParams)
    learner: str = "esn-transfer"
    periods: int = 4
    replications: int = 20
    seed: int = 0
    action_cap: int = 200
    change_schedule: tuple[int, ...] = (2, 3, 4)
    redraw_channel: bool = True
    output_dir: str = "out"

    @property
    def slots_per_period(self) -> int:
        return self.network.period_length

    def validate(self) -> None:
        self.network.validate()
        self.content.validate()
        self.learning.validate()
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}; expected one of {LEARNERS}")
        if self.periods < 1:
            raise ConfigError("periods must be >= 1")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.action_cap < 1:
            raise ConfigError("action_cap must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        for p in self.change_schedule:
            if not 1 <= p <= self.periods:
                raise ConfigError(f"change period {p} outside [1, {self.periods}]")

    def replace(self, **changes: Any) -> "ExperimentConfig":
        """Copy with top-level or dotted (``network.num_sbs``) overrides."""
        top: dict[str, Any] = {}
        nested: dict[str, dict[str, Any]] = {}
        for key, value in changes.items():
            if "." in key:
                section, name = key.split(".", 1)
                nested.setdefault(section, {})[name] = value
            else:
                top[key] = value
        for section, values in nested.items():
            top[section] = dataclasses.replace(getattr(self, section), **values)
        return dataclasses.replace(self, **top)

    def canonical_text(self) -> str:
        """Stable textual form used for hashing and manifests."""
        lines = []
        for section in ("network", "content", "learning"):
            for f in dataclasses.fields(getattr(self, section)):
                lines.append(f"{section}.{f.name}={getattr(getattr(self, section), f.name)!r}")
        for f in dataclasses.fields(self):
            if f.name in ("network", "content", "learning", "output_dir"):
                continue
            lines.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# config-file parsing

# file key -> (section, attribute, kind)
_KEYS: dict[str, tuple[str, str, str]] = {
    "areaRadius": ("network", "area_radius", "length"),
    "sbsCoverageRadius": ("network", "sbs_coverage_radius", "length"),
    "numUsers": ("network", "num_users", "int"),
    "numSbs": ("network", "num_sbs", "int"),
    "subcarrierBandwidth": ("network", "subcarrier_bandwidth", "freq"),
    "numDownlinkRb": ("network", "num_downlink_rb", "int"),
    "numUplinkRb": ("network", "num_uplink_rb", "int"),
    "sbsTxPower": ("network", "sbs_tx_power", "power"),
    "userTxPower": ("network", "user_tx_power", "power"),
    "noisePower": ("network", "noise_power", "power"),
    "pathLossExponent": ("network", "path_loss_exponent", "float"),
    "backhaulTotal": ("network", "backhaul_total", "rate"),
    "computeCapacity": ("network", "compute_capacity", "rate"),
    "computeLevels": ("network", "compute_levels", "int"),
    "corrDistExponent": ("network", "corr_dist_exponent", "float"),
    "corrDistScale": ("network", "corr_dist_scale", "float"),
    "maxDelayDl": ("network", "max_delay_dl", "time"),
    "maxDelayUl": ("network", "max_delay_ul", "time"),
    "periodLength": ("network", "period_length", "int"),
    "vrRate": ("network", "vr_rate", "rate"),
    "periodDuration": ("network", "period_duration", "time"),
    "uplinkRatio": ("network", "uplink_ratio", "float"),
    "numContents": ("content", "num_contents", "int"),
    "pixelsPerUser": ("content", "pixels_per_user", "int"),
    "overlapLow": ("content", "overlap_low", "float"),
    "overlapHigh": ("content", "overlap_high", "float"),
    "trackingStd": ("content", "tracking_std", "float"),
    "reservoirSize": ("learning", "reservoir_size", "int"),
    "spectralRadius": ("learning", "spectral_radius", "float"),
    "learningRate": ("learning", "learning_rate", "float"),
    "transferLearningRate": ("learning", "transfer_learning_rate", "float"),
    "lmsStep": ("learning", "lms_step", "float"),
    "qStepSize": ("learning", "q_step_size", "float"),
    "epsilonStart": ("learning", "epsilon_start", "float"),
    "epsilonDecay": ("learning", "epsilon_decay", "float"),
    "epsilonFloor": ("learning", "epsilon_floor", "float"),
    "washout": ("learning", "washout", "int"),
    "learner": ("", "learner", "str"),
    "periods": ("", "periods", "int"),
    "replications": ("", "replications", "int"),
    "seed": ("", "seed", "int"),
    "actionCap": ("", "action_cap", "int"),
    "changeSchedule": ("", "change_schedule", "intlist"),
    "redrawChannel": ("", "redraw_channel", "bool"),
    "outputDir": ("", "output_dir", "str"),
}

# symbol-style aliases for the table parameters
_ALIASES = {
    "r": "areaRadius", "r_B": "sbsCoverageRadius", "U": "numUsers", "B": "numSbs",
    "S": "numDownlinkRb", "V": "numUplinkRb", "P_B": "sbsTxPower",
    "P_U": "userTxPower", "sigma2": "noisePower", "N0": "noisePower",
    "beta": "pathLossExponent", "V_F": "backhaulTotal", "c": "computeCapacity",
    "M": "computeLevels", "alpha": "corrDistExponent", "kappa": "corrDistScale",
    "gamma_D": "maxDelayDl", "gamma_Du": "maxDelayUl", "T": "periodLength",
    "slotsPerPeriod": "periodLength", "N_w": "reservoirSize",
    "lambda": "learningRate", "lambda_prime": "transferLearningRate",
}

_UNITS: dict[str, dict[str, float]] = {
    "length": {"m": 1.0, "km": 1e3},
    "freq": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "rate": {"bit/s": 1.0, "bps": 1.0, "kbit/s": 1e3, "mbit/s": 1e6, "gbit/s": 1e9,
             "bit": 1.0, "kbit": 1e3, "mbit": 1e6, "gbit": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "power": {"w": 1.0, "mw": 1e-3},
}

_NUMBER = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*)$")


def _parse_value(key: str, kind: str, raw: str, lineno: int) -> Any:
    def fail(msg: str) -> ConfigError:
        return ConfigError(f"line {lineno}: {key}: {msg}")

    if kind == "str":
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise fail(f"expected a boolean, got {raw!r}")
    if kind == "intlist":
        if raw.strip() in ("", "none"):
            return ()
        try:
            return tuple(int(p) for p in raw.replace(" ", "").split(",") if p)
        except ValueError:
            raise fail(f"expected comma-separated integers, got {raw!r}") from None
    m = _NUMBER.match(raw)
    if not m:
        raise fail(f"expected a number, got {raw!r}")
    number = float(m.group(1))
    unit = m.group(2).strip()
    if kind == "int":
        if unit or not number.is_integer():
            raise fail(f"expected an integer, got {raw!r}")
        return int(number)
    if not unit:
        return number
    if kind == "power" and unit.lower() == "dbm":
        return dbm_to_watt(number)
    table = _UNITS.get(kind)
    if table is None or unit.lower() not in table:
        raise fail(f"unsupported unit {unit!r}")
    return number * table[unit.lower()]


def parse_config_text(text: str) -> ExperimentConfig:
    sections: dict[str, dict[str, Any]] = {"network": {}, "content": {}, "learning": {}, "": {}}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, attr, kind = _KEYS[key]
        sections[section][attr] = _parse_value(key, kind, raw, lineno)

    top = dict(sections[""])
    cfg = ExperimentConfig(
        network=NetworkConfig(**sections["network"]),
        content=ContentParams(**sections["content"]),
        learning=LearnerParams(**sections["learning"]),
        **top,
    )
    if "change_schedule" not in top:
        # default: a change at every period after the first
        cfg = dataclasses.replace(cfg, change_schedule=tuple(range(2, cfg.periods + 1)))
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"))


def config_keys() -> list[str]:
    return sorted(_KEYS)
