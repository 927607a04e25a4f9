"""Scenario configuration: INI files with explicit units in key names.

Sections::

    [scenario]    duration_s, dt_sim_s, dt_ctrl_s, seed, burn_in_s, name
    [feeder]      source (ieee33 | path), base_power_mva, base_voltage_kv,
                  background_load_scale
    [controller]  type (fixed | switching), gain (auto | number),
                  deadband_pu, dq_max_pu, window_amp_s, window_bias_s,
                  eta_b, warmup_s, actuated (all | bus list)
    [smoothing]   enabled, k_p, horizon_s, activation_s, soc_initial,
                  soc_min, soc_max, backup_s
    [dc.<bus>]    source (synthetic | csv), p_comm_pu, p_comp_pu,
                  w_comm_pu, w_comp_pu, period_comm_s, period_comp_s,
                  phase_offset_s   -- or --   path, scale_pu_per_w

Overrides are ``section.key=value``. A bare ``key=value`` applies when
exactly one section has that key; ``controller=...`` is short for
``controller.type=...``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .workload import TwoModeProfile

BUILTIN = ("single_dc", "two_dc", "smoothing")

DEFAULTS = {
    "scenario": {"duration_s": "2700", "dt_sim_s": "0.1", "dt_ctrl_s": "1.0", "seed": "0",
                 "burn_in_s": "0", "name": "scenario"},
    "feeder": {"source": "ieee33", "base_power_mva": "10.0", "base_voltage_kv": "12.66",
               "background_load_scale": "0.0"},
    "controller": {"type": "switching", "gain": "auto", "deadband_pu": "0.02", "dq_max_pu": "0.01",
                   "window_amp_s": "120", "window_bias_s": "120", "eta_b": "0.005", "warmup_s": "auto",
                   "actuated": "all"},
    "smoothing": {"enabled": "false", "k_p": "0.6", "horizon_s": "100", "activation_s": "0",
                  "soc_initial": "0.95", "soc_min": "0.93", "soc_max": "0.97", "backup_s": "60"},
}
DC_DEFAULTS = {"source": "synthetic", "w_comm_pu": "0", "w_comp_pu": "0", "period_comm_s": "60",
               "period_comp_s": "60", "phase_offset_s": "0", "scale_pu_per_w": "auto"}


@dataclass
class DataCenterSpec:
    bus: int
    source: str = "synthetic"
    profile: TwoModeProfile | None = None
    path: Path | None = None
    scale: float | None = None


@dataclass
class ControllerConfig:
    kind: str = "switching"
    gain: float | None = None
    deadband: float = 0.02
    dq_max: float = 0.01
    window_amp_s: float = 120.0
    window_bias_s: float = 120.0
    eta_b: float = 0.005
    warmup_s: float | None = None
    actuated: tuple | None = None


@dataclass
class SmoothingConfig:
    enabled: bool = False
    k_p: float = 0.6
    horizon_s: float = 100.0
    activation_s: float = 0.0
    soc_initial: float = 0.95
    soc_band: tuple = (0.93, 0.97)
    backup_s: float = 60.0


@dataclass
class ScenarioConfig:
    dc: list = field(default_factory=list)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    feeder_source: str = "ieee33"
    base_power: float = 10.0
    base_voltage: float = 12.66
    background_load_scale: float = 0.0
    dt_sim: float = 0.1
    dt_ctrl: float = 1.0
    duration: float = 2700.0
    seed: int = 0
    burn_in_s: float = 0.0
    name: str = "scenario"

    @property
    def ctrl_ratio(self):
        return int(round(self.dt_ctrl / self.dt_sim))

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt_sim))

    def problems(self, buses=None, slack=None):
        """Every violated invariant, as human-readable strings."""
        out = []
        if not self.dt_sim > 0:
            out.append("scenario.dt_sim_s must be positive")
        if not self.dt_ctrl > 0:
            out.append("scenario.dt_ctrl_s must be positive")
        if self.dt_sim > 0 and self.dt_ctrl > 0:
            r = self.dt_ctrl / self.dt_sim
            if abs(r - round(r)) > 1e-9 or round(r) < 1:
                out.append("scenario.dt_ctrl_s must be an integer multiple of dt_sim_s")
        if not self.duration > 0:
            out.append("scenario.duration_s must be positive")
        if self.burn_in_s < 0:
            out.append("scenario.burn_in_s must be non-negative")
        if self.controller.kind not in ("fixed", "switching"):
            out.append(f"controller.type must be 'fixed' or 'switching', got {self.controller.kind!r}")
        if self.controller.gain is not None and self.controller.gain < 0:
            out.append("controller.gain must be non-negative")
        if self.controller.deadband < 0:
            out.append("controller.deadband_pu must be non-negative")
        if not self.controller.dq_max > 0:
            out.append("controller.dq_max_pu must be positive")
        if not 0 < self.controller.eta_b <= 1:
            out.append("controller.eta_b must lie in (0, 1]")
        if self.dt_ctrl > 0:
            if self.controller.window_amp_s / self.dt_ctrl < 2:
                out.append("controller.window_amp_s must span at least two control steps")
            if self.controller.window_bias_s / self.dt_ctrl < 1:
                out.append("controller.window_bias_s must span at least one control step")
        if not self.dc:
            out.append("at least one [dc.<bus>] section is required")
        seen = set()
        for spec in self.dc:
            if spec.bus in seen:
                out.append(f"data-center bus {spec.bus} listed twice")
            seen.add(spec.bus)
            if slack is not None and spec.bus == slack:
                out.append(f"data-center bus {spec.bus} is the slack bus")
            elif buses is not None and spec.bus not in buses:
                out.append(f"data-center bus {spec.bus} is not on the feeder")
            if spec.source == "synthetic":
                try:
                    spec.profile.validate()
                except ValueError as exc:
                    out.append(f"dc.{spec.bus}: {exc}")
            elif spec.source == "csv":
                if spec.path is None or not Path(spec.path).is_file():
                    out.append(f"dc.{spec.bus}: trace file {spec.path} not found")
            else:
                out.append(f"dc.{spec.bus}: source must be 'synthetic' or 'csv'")
        if buses is not None and self.controller.actuated is not None:
            bad = [b for b in self.controller.actuated if b not in buses]
            if bad:
                out.append(f"controller.actuated lists unknown buses {bad}")
        sm = self.smoothing
        if sm.enabled:
            lo, hi = sm.soc_band
            if not 0 <= lo <= sm.soc_initial <= hi <= 1:
                out.append("smoothing: need 0 <= soc_min <= soc_initial <= soc_max <= 1")
            if not sm.horizon_s > 0 or not sm.backup_s > 0:
                out.append("smoothing: horizon_s and backup_s must be positive")
        return out

    def validate(self, buses=None, slack=None):
        probs = self.problems(buses, slack)
        if probs:
            raise ConfigError(probs)
        return self


def builtin_path(name):
    return Path(str(resources.files("voltref") / "configs" / f"{name}.ini"))


def resolve_config_path(path_or_name):
    p = Path(path_or_name)
    if p.is_file():
        return p
    if str(path_or_name) in BUILTIN:
        return builtin_path(str(path_or_name))
    raise ConfigError(f"config file {path_or_name} not found")


def read_parser(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parser


def apply_overrides(parser, overrides):
    problems = []
    for item in overrides or ():
        if "=" not in item:
            problems.append(f"override {item!r} is not key=value")
            continue
        key, value = (s.strip() for s in item.split("=", 1))
        if key == "controller":
            key = "controller.type"
        if "." in key:
            section, opt = key.rsplit(".", 1)
        else:
            owners = [s for s in set(parser.sections()) | set(DEFAULTS)
                      if opt_known(parser, s, key)]
            if len(owners) != 1:
                problems.append(f"override key {key!r} is {'ambiguous' if owners else 'unknown'}; use section.key")
                continue
            section, opt = owners[0], key
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, opt, value)
    if problems:
        raise ConfigError(problems)
    return parser


def opt_known(parser, section, key):
    if parser.has_section(section) and parser.has_option(section, key):
        return True
    return key in DEFAULTS.get(section, {})


def _get(parser, section, key, conv, problems, defaults):
    raw = parser.get(section, key, fallback=None) if parser.has_section(section) else None
    if raw is None:
        raw = defaults.get(key)
    try:
        return conv(raw)
    except (TypeError, ValueError):
        problems.append(f"{section}.{key}: cannot interpret {raw!r}")
        return None


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _auto_float(s):
    return None if str(s).strip().lower() == "auto" else float(s)


def _bus_list(s):
    s = str(s).strip().lower()
    if s == "all":
        return None
    return tuple(int(t) for t in s.replace(",", " ").split())


def config_from_parser(parser, base_dir=None) -> ScenarioConfig:
    problems = []
    known = set(DEFAULTS)
    for s in parser.sections():
        if s not in known and not s.startswith("dc."):
            problems.append(f"unknown section [{s}]")
        defaults = DEFAULTS.get(s)
        if s.startswith("dc."):
            defaults = {**DC_DEFAULTS, "p_comm_pu": "", "p_comp_pu": "", "path": ""}
        if defaults is not None:
            for opt in parser.options(s):
                if opt not in defaults:
                    problems.append(f"unknown key {s}.{opt}")

    def g(section, key, conv, defaults=None):
        return _get(parser, section, key, conv, problems, DEFAULTS[section] if defaults is None else defaults)

    cfg = ScenarioConfig()
    cfg.duration = g("scenario", "duration_s", float)
    cfg.dt_sim = g("scenario", "dt_sim_s", float)
    cfg.dt_ctrl = g("scenario", "dt_ctrl_s", float)
    cfg.seed = g("scenario", "seed", int)
    cfg.burn_in_s = g("scenario", "burn_in_s", float)
    cfg.name = g("scenario", "name", str)
    cfg.feeder_source = g("feeder", "source", str)
    cfg.base_power = g("feeder", "base_power_mva", float)
    cfg.base_voltage = g("feeder", "base_voltage_kv", float)
    cfg.background_load_scale = g("feeder", "background_load_scale", float)
    if cfg.feeder_source != "ieee33" and base_dir is not None and not Path(cfg.feeder_source).is_absolute():
        cfg.feeder_source = str(Path(base_dir) / cfg.feeder_source)

    cfg.controller = ControllerConfig(
        kind=g("controller", "type", str),
        gain=g("controller", "gain", _auto_float),
        deadband=g("controller", "deadband_pu", float),
        dq_max=g("controller", "dq_max_pu", float),
        window_amp_s=g("controller", "window_amp_s", float),
        window_bias_s=g("controller", "window_bias_s", float),
        eta_b=g("controller", "eta_b", float),
        warmup_s=g("controller", "warmup_s", _auto_float),
        actuated=g("controller", "actuated", _bus_list),
    )
    cfg.smoothing = SmoothingConfig(
        enabled=g("smoothing", "enabled", _bool),
        k_p=g("smoothing", "k_p", float),
        horizon_s=g("smoothing", "horizon_s", float),
        activation_s=g("smoothing", "activation_s", float),
        soc_initial=g("smoothing", "soc_initial", float),
        soc_band=(g("smoothing", "soc_min", float), g("smoothing", "soc_max", float)),
        backup_s=g("smoothing", "backup_s", float),
    )

    for s in parser.sections():
        if not s.startswith("dc."):
            continue
        try:
            bus = int(s[3:])
        except ValueError:
            problems.append(f"section [{s}] must be [dc.<bus number>]")
            continue
        d = {**DC_DEFAULTS, "p_comm_pu": None, "p_comp_pu": None, "path": None}
        source = g(s, "source", str, d)
        spec = DataCenterSpec(bus, source)
        if source == "synthetic":
            vals = {k: g(s, k, float, d) for k in ("p_comm_pu", "p_comp_pu", "w_comm_pu", "w_comp_pu",
                                                     "period_comm_s", "period_comp_s", "phase_offset_s")}
            if None not in vals.values():
                spec.profile = TwoModeProfile(
                    vals["p_comm_pu"], vals["p_comp_pu"], vals["w_comm_pu"], vals["w_comp_pu"],
                    vals["period_comm_s"], vals["period_comp_s"], noise_seed=0,
                    phase_offset=vals["phase_offset_s"])
            else:
                continue
        elif source == "csv":
            path = g(s, "path", str, d)
            if path:
                path = Path(path)
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
            spec.path = path
            spec.scale = g(s, "scale_pu_per_w", _auto_float, d)
        cfg.dc.append(spec)

    if problems:
        raise ConfigError(problems)
    probs = cfg.problems()
    if probs:
        raise ConfigError(probs)
    return cfg


def load_config(path_or_name, overrides=()) -> ScenarioConfig:
    path = resolve_config_path(path_or_name)
    parser = apply_overrides(read_parser(path), overrides)
    return config_from_parser(parser, base_dir=path.parent)
