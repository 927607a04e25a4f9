"""Two-time-scale closed-loop simulation of feeder, loads and controller.

Loads and voltages advance every ``dt_sim``; the controller samples the
instantaneous voltage every ``dt_ctrl`` and the resulting reactive setpoint
takes effect from the next simulation step. Because storage smoothing
depends only on the load history, net injections (and hence ``R p``) are
computed up front and the Python loop only visits control instants.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .analysis import validate_gain
from .control import (
    ControlLimits,
    DroopGain,
    FixedReferenceController,
    SwitchingReferenceController,
    droop_update,
)
from .errors import ConfigError
from .feeder import FeederModel, ieee33_loads, load_ieee33
from .scenario import ScenarioConfig
from .workload import StorageSmoother, load_trace_csv, smooth_series

VIOLATION_BAND = 0.05
SCALAR_METRICS = ("max_abs_dev", "violations", "effort")


@dataclass
class SimResult:
    """Trajectories of one run. Per-step arrays have one row per sim step."""

    t: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    v_ref: np.ndarray
    ctrl_steps: np.ndarray
    dq: np.ndarray
    buses: tuple
    dc_buses: tuple = ()
    sign: np.ndarray | None = None
    amp: np.ndarray | None = None
    bias: np.ndarray | None = None
    modes: dict = field(default_factory=dict)
    soc: dict = field(default_factory=dict)
    controller: str = ""
    burn_in_s: float = 0.0
    metrics: dict = field(default_factory=dict)
    certificate: dict | None = None

    @property
    def t_ctrl(self):
        return self.t[self.ctrl_steps]

    def col(self, bus):
        return self.buses.index(bus)

    def to_csv(self, path, precision=10):
        """Wide table: time, control/violation flags, then per-bus v, q, v_ref.

        Data-center buses also get their net active injection ``p_<bus>``.
        """
        n = len(self.buses)
        ctrl = np.zeros(self.t.size)
        ctrl[self.ctrl_steps] = 1
        viol = (np.abs(self.v - 1.0) > VIOLATION_BAND).any(axis=1)
        dc_cols = [self.col(b) for b in self.dc_buses]
        header = ["time_s", "ctrl", "violation"]
        header += [f"v_{b}" for b in self.buses] + [f"q_{b}" for b in self.buses]
        header += [f"vref_{b}" for b in self.buses] + [f"p_{self.buses[i]}" for i in dc_cols]
        data = np.column_stack([self.t, ctrl, viol, self.v, self.q, self.v_ref, self.p[:, dc_cols]])
        fmt = ["%.4f", "%d", "%d"] + [f"%.{precision}g"] * (3 * n + len(dc_cols))
        np.savetxt(path, data, fmt=fmt, delimiter=",", header=",".join(header), comments="")

    def summary(self):
        out = {"controller": self.controller, "buses": list(self.buses), "dc_buses": list(self.dc_buses),
               "metrics": self.metrics}
        if self.certificate is not None:
            out["certificate"] = self.certificate
        return out

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def compute_metrics(t, v, t_ctrl, dq, buses, burn_in_s=0.0):
    """Deviation, violation and effort metrics after ``burn_in_s`` seconds."""
    keep = t >= burn_in_s
    keep_c = t_ctrl >= burn_in_s
    dev = np.abs(v[keep] - 1.0)
    eff = np.abs(dq[keep_c]).sum(axis=0)
    per_bus_dev = dev.max(axis=0) if dev.size else np.zeros(len(buses))
    return {
        "burn_in_s": float(burn_in_s),
        "max_abs_dev": float(per_bus_dev.max()) if dev.size else 0.0,
        "violations": int((dev > VIOLATION_BAND).sum()),
        "effort": float(eff.sum()),
        "per_bus": {str(b): {"max_abs_dev": float(per_bus_dev[i]), "effort": float(eff[i])}
                    for i, b in enumerate(buses)},
    }


def result_metrics(res: SimResult, burn_in_s=None):
    return compute_metrics(res.t, res.v, res.t_ctrl, res.dq, res.buses,
                           res.burn_in_s if burn_in_s is None else burn_in_s)


def build_feeder_for(config: ScenarioConfig) -> FeederModel:
    path = None if config.feeder_source == "ieee33" else config.feeder_source
    return load_ieee33(path, config.base_power, config.base_voltage)


def background_injections(model, config: ScenarioConfig):
    if config.background_load_scale == 0:
        return np.zeros(model.n), np.zeros(model.n)
    p, q = ieee33_loads(model)
    return p * config.background_load_scale, q * config.background_load_scale


def dc_columns(model, config: ScenarioConfig, n_steps):
    """Raw injection column and mode sequence (or None) for each data center."""
    cols = {}
    for spec in config.dc:
        if spec.source == "synthetic":
            rng = np.random.default_rng([config.seed, spec.bus])
            col, modes = spec.profile.column(n_steps, config.dt_sim, rng)
        else:
            scale = spec.scale if spec.scale is not None else -1.0 / (config.base_power * 1e6)
            trace = load_trace_csv(spec.path, config.dt_sim, spec.bus, scale)
            raw = trace.samples[:, 0]
            col = np.concatenate([raw, np.full(max(0, n_steps - raw.size), raw[-1])])[:n_steps]
            modes = None
        cols[spec.bus] = (col, modes)
    return cols


def build_gain(model, config: ScenarioConfig):
    actuated = None
    if config.controller.actuated is not None:
        actuated = [model.index(b) for b in config.controller.actuated]
    if config.controller.gain is None:
        return DroopGain.default(model.X, actuated)
    return DroopGain.uniform(model.n, config.controller.gain, actuated)


def make_controller(kind, model, config: ScenarioConfig):
    if kind == "fixed":
        return FixedReferenceController(model.n)
    c = config.controller
    L_a = int(round(c.window_amp_s / config.dt_ctrl))
    L_b = int(round(c.window_bias_s / config.dt_ctrl))
    warmup = None if c.warmup_s is None else max(1, int(round(c.warmup_s / config.dt_ctrl)))
    return SwitchingReferenceController(model.n, L_a, L_b, c.eta_b, warmup)


def prepare(config: ScenarioConfig, model: FeederModel | None = None):
    """Feeder, net injections, initial reactive injections, modes and soc."""
    model = build_feeder_for(config) if model is None else model
    config.validate(set(model.buses), model.slack)
    n_steps = config.n_steps
    p_bg, q_bg = background_injections(model, config)
    P = np.tile(p_bg, (n_steps, 1))
    modes, socs = {}, {}
    sm = config.smoothing
    start = int(np.ceil(sm.activation_s / config.dt_sim - 1e-9))
    for bus, (col, m) in dc_columns(model, config, n_steps).items():
        if sm.enabled:
            smoother = StorageSmoother.sized_for(np.max(np.abs(col)), sm.backup_s, k_p=sm.k_p,
                                                 horizon=sm.horizon_s, soc=sm.soc_initial, soc_band=sm.soc_band)
            net, _, soc = smooth_series(-col, config.dt_sim, smoother, start_index=start)
            col = -net
            socs[bus] = soc
        P[:, model.index(bus)] = col
        if m is not None:
            modes[bus] = m
    return model, P, q_bg, modes, socs


def simulate(model: FeederModel, P, q0, controller, K: DroopGain, limits: ControlLimits, ctrl_ratio, dt_sim):
    """Core loop. Returns ``(V, Q, Vref, ctrl_steps, dq, snapshots)``."""
    n_steps, n = P.shape
    Rp = P @ model.R.T
    X = model.X
    ctrl_steps = np.arange(0, n_steps, ctrl_ratio)
    Q = np.empty((n_steps, n))
    Vref = np.empty((n_steps, n))
    dq_log = np.empty((ctrl_steps.size, n))
    snaps = []
    q = np.array(q0, dtype=float)
    for c, k in enumerate(ctrl_steps):
        end = min(k + ctrl_ratio, n_steps)
        Q[k] = q
        v = Rp[k] + X @ q + 1.0
        ref = controller.reference(v, k)
        q_next, dq = droop_update(q, v, ref, K, limits)
        Q[k + 1:end] = q_next
        Vref[k:end] = ref
        dq_log[c] = dq
        snap = controller.snapshot()
        if snap is not None:
            snaps.append(snap)
        q = q_next
    V = Rp + Q @ X.T + 1.0
    return V, Q, Vref, ctrl_steps, dq_log, snaps


def run_scenario(config: ScenarioConfig, controller=None, model=None, limits=None) -> SimResult:
    """Run one scenario. ``controller`` overrides the configured one (e.g. an oracle)."""
    model, P, q0, modes, socs = prepare(config, model)
    K = build_gain(model, config)
    if limits is None:
        limits = ControlLimits(config.controller.deadband, config.controller.dq_max)
    if controller is None:
        controller = make_controller(config.controller.kind, model, config)
    V, Q, Vref, ctrl_steps, dq, snaps = simulate(model, P, q0, controller, K, limits,
                                                 config.ctrl_ratio, config.dt_sim)
    t = np.arange(config.n_steps) * config.dt_sim
    res = SimResult(t, V, P, Q, Vref, ctrl_steps, dq, model.buses,
                    tuple(s.bus for s in config.dc), modes=modes, soc=socs,
                    controller=getattr(controller, "name", "custom"), burn_in_s=config.burn_in_s)
    if snaps:
        res.sign, res.amp, res.bias = (np.array(a) for a in zip(*snaps))
    res.metrics = result_metrics(res)
    res.certificate = validate_gain(model.X, K).as_dict()
    return res


def metric_deltas(base: dict, other: dict):
    """``other - base`` for each scalar metric, plus relative change where defined."""
    out = {}
    for key in SCALAR_METRICS:
        a, b = base[key], other[key]
        out[key] = b - a
        out[f"{key}_rel"] = (b - a) / a if a else 0.0 if b == a else float("inf")
    return out


@dataclass
class Comparison:
    """Paired runs of the same scenario; deltas are ``candidate - baseline``."""

    baseline: SimResult
    candidate: SimResult
    deltas: dict
    kinds: tuple = ("fixed", "switching")

    def summary(self):
        return {"controllers": list(self.kinds), "baseline": self.baseline.metrics,
                "candidate": self.candidate.metrics, "deltas": self.deltas,
                "certificate": self.baseline.certificate}


def compare_controllers(config: ScenarioConfig, kinds=("fixed", "switching")) -> Comparison:
    """Same scenario, seed, gain and limits under two controllers."""
    if len(kinds) != 2:
        raise ConfigError("compare needs exactly two controller kinds")
    model = build_feeder_for(config)
    a = run_scenario(config, make_controller(kinds[0], model, config), model)
    b = run_scenario(config, make_controller(kinds[1], model, config), model)
    return Comparison(a, b, metric_deltas(a.metrics, b.metrics), tuple(kinds))
