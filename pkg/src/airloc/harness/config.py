"""Campaign configuration: dataclasses, per-scenario defaults and YAML loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from ..channel import ChannelParams
from ..localization import GdConfig

SCENARIOS = ("node_selection", "weighted", "los_variation", "penetration", "attack_defense", "spoofer_loc")
FILTERS = ("none", "tcv", "sdet", "rdef")


class ConfigError(ValueError):
    """Raised for an inconsistent or malformed campaign configuration."""


@dataclass
class DeploymentConfig:
    cell_radius_m: float = 60.0
    layers: int = 3
    node_altitude_m: tuple = (0.0, 5.0)
    h_uav_m: float = 20.0
    d_gc_max_m: float = 60.0
    sigma_h_m: float = 1.0
    sigma_gps_m: float = 5.0
    # Table II draws the GPS sigma per run; when set it overrides sigma_gps_m
    sigma_gps_range_m: tuple | None = None


@dataclass
class SelectionConfig:
    modes: tuple = ("ue", "lmf")
    n_values: tuple = tuple(range(3, 21))
    rof: bool = True
    n_max: int = 20
    weighted: tuple = (False,)
    rssi_noise_db: float = 1.0


@dataclass
class MeasurementConfig:
    k_rounds: int = 1
    interval_s: float = 0.05
    residual_sync_s: float = 1e-9
    # converts the Fisher-information sigma into meters; see README
    sigma_scale: float = 22.0
    nlos_excess: float = 0.0
    uav_speed_mps: tuple = (0.0, 0.0)


@dataclass
class AttackConfig:
    strategies: tuple = ("focused", "global", "selective")
    budgets_dbm: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    selective_counts: tuple = (3, 5)
    delta_u_s: float = 1e-6
    delta_sp_s: float = 1e-6
    l_m_s: float | None = None  # None: 1 / bandwidth
    alpha_sep: float = 2.0
    lead_s: float = 0.0
    n_pulses: int = 5
    threshold_rel_db: float = -10.0


@dataclass
class DefenseConfig:
    filters: tuple = FILTERS
    rdef_betas: tuple = (0.97, 0.99)
    rdef_gd: GdConfig = field(default_factory=lambda: GdConfig(learning_rate=1.5, max_iter=5))


@dataclass
class SpooferLocConfig:
    sessions: int = 20  # M, entries collected per spoofer
    max_sessions: int = 40
    min_entries: int = 5
    max_radial_speed_mps: float = 60.0
    solver: str = "lsq"  # lsq: trust-region least squares; gd: step-decay descent with defense.rdef_gd


@dataclass
class PenetrationConfig:
    trials_per_seed: int = 50
    ranks: int = 8
    delta_u_s: tuple = (1e-6, 3e-7)
    delta_sp_s: tuple = (1e-6,)
    lead_s: tuple = (0.0, 2e-7)
    l_s_s: tuple = (1e-7, 2e-7)
    l_m_s: float = 5e-8
    n_pulses: tuple = (1, 3, 5)


@dataclass
class CampaignConfig:
    scenario: str = "node_selection"
    seeds: int = 200
    base_seed: int = 0
    channel: ChannelParams = field(default_factory=ChannelParams)
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    gd: GdConfig = field(default_factory=GdConfig)
    attack: AttackConfig | None = None
    defense: DefenseConfig | None = None
    spoofer_loc: SpooferLocConfig | None = None
    penetration: PenetrationConfig | None = None
    los_offsets: tuple = (0.0,)

    def validate(self) -> "CampaignConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.selection.n_max < 3:
            raise ConfigError("selection.n_max must be >= 3")
        if any(n < 1 for n in self.selection.n_values):
            raise ConfigError("selection.n_values must be positive")
        need = max([self.selection.n_max, *self.selection.n_values])
        if _hex_count(self.deployment.layers) < need:
            raise ConfigError(
                f"deployment with {self.deployment.layers} layers has {_hex_count(self.deployment.layers)} "
                f"nodes, fewer than the {need} requested by selection")
        if not set(self.selection.modes) <= {"ue", "lmf"}:
            raise ConfigError("selection.modes must be drawn from ue, lmf")
        for d in self.los_offsets:
            if not -1.0 <= d <= 1.0:
                raise ConfigError("los_offsets must lie in [-1, 1]")
        if self.measurement.k_rounds < 1:
            raise ConfigError("measurement.k_rounds must be >= 1")
        if self.scenario in ("attack_defense", "spoofer_loc"):
            if self.attack is None or self.defense is None:
                raise ConfigError(f"scenario {self.scenario} needs attack and defense sections")
            bad = set(self.attack.strategies) - {"focused", "global", "selective"}
            if bad:
                raise ConfigError(f"unknown attack strategies {sorted(bad)}")
            bad = set(self.defense.filters) - set(FILTERS)
            if bad:
                raise ConfigError(f"unknown filters {sorted(bad)}")
        if self.scenario == "spoofer_loc":
            if self.spoofer_loc is None:
                raise ConfigError("scenario spoofer_loc needs a spoofer_loc section")
            if self.spoofer_loc.solver not in ("lsq", "gd"):
                raise ConfigError("spoofer_loc.solver must be lsq or gd")
            if self.spoofer_loc.max_sessions < 1 or self.spoofer_loc.sessions < 1:
                raise ConfigError("spoofer_loc.sessions and max_sessions must be >= 1")
        if self.scenario == "penetration" and self.penetration is None:
            raise ConfigError("scenario penetration needs a penetration section")
        return self


def _hex_count(layers: int) -> int:
    return 3 * layers * layers + 3 * layers + 1


def attack_overrides(cfg: CampaignConfig) -> CampaignConfig:
    """Second simulation setup: attack/defense geometry and timing."""
    cfg.deployment = DeploymentConfig(cell_radius_m=100.0, layers=3, h_uav_m=25.0, d_gc_max_m=60.0,
                                      sigma_gps_range_m=(3.0, 7.0))
    cfg.measurement = MeasurementConfig(k_rounds=10, interval_s=0.05, uav_speed_mps=(5.0, 15.0))
    cfg.selection = SelectionConfig(modes=("ue",), n_values=(), rof=True, weighted=(True,))
    cfg.attack = AttackConfig()
    cfg.defense = DefenseConfig()
    return cfg


def default_config(scenario: str) -> CampaignConfig:
    """Default settings for a scenario."""
    cfg = CampaignConfig(scenario=scenario)
    if scenario == "weighted":
        cfg.deployment.h_uav_m = 30.0
        cfg.selection.weighted = (False, True)
    elif scenario == "los_variation":
        cfg.los_offsets = (-0.4, -0.3, -0.2, -0.1, 0.0, 0.1)
    elif scenario == "penetration":
        cfg.penetration = PenetrationConfig()
    elif scenario in ("attack_defense", "spoofer_loc"):
        attack_overrides(cfg)
        if scenario == "spoofer_loc":
            cfg.spoofer_loc = SpooferLocConfig()
            cfg.attack.budgets_dbm = (5.0, 35.0)
            cfg.defense.filters = ("sdet", "rdef")
    elif scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    return cfg


def _merge(obj, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    names = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown key {path + key!r}")
        current = getattr(obj, key)
        if value is None and key in _OPTIONAL_SECTIONS:
            setattr(obj, key, None)
        elif is_dataclass(current):
            if dataclasses.fields(current) and getattr(type(current), "__dataclass_params__").frozen:
                try:
                    value = dataclasses.replace(current, **value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{path + key}: {exc}") from None
                setattr(obj, key, _tuplify(value))
            else:
                _merge(current, value, f"{path}{key}.")
        elif current is None and key in _OPTIONAL_SECTIONS:
            section = _OPTIONAL_SECTIONS[key]()
            _merge(section, value, f"{path}{key}.")
            setattr(obj, key, section)
        else:
            setattr(obj, key, tuple(value) if isinstance(value, list) else value)


def _tuplify(dc):
    for f in fields(dc):
        v = getattr(dc, f.name)
        if isinstance(v, list):
            object.__setattr__(dc, f.name, tuple(v))
    return dc


_OPTIONAL_SECTIONS = {
    "attack": AttackConfig,
    "defense": DefenseConfig,
    "spoofer_loc": SpooferLocConfig,
    "penetration": PenetrationConfig,
}


def config_from_dict(data: dict, scenario: str | None = None) -> CampaignConfig:
    data = dict(data or {})
    name = scenario or data.get("scenario", "node_selection")
    data.pop("scenario", None)
    cfg = default_config(name)
    _merge(cfg, data, "")
    return cfg.validate()


def load_config(path, scenario: str | None = None) -> CampaignConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(data or {}, scenario)


def config_to_dict(cfg: CampaignConfig) -> dict:
    def conv(v):
        if is_dataclass(v):
            return {f.name: conv(getattr(v, f.name)) for f in fields(v)}
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        return v

    return conv(cfg)
