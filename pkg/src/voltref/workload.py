"""Data-center active-power traces and internal storage smoothing.

All traces are in injection space: consumption is negative. The storage
smoother is the one exception and works on consumption magnitude, so that a
positive dispatch means discharging (see :func:`smooth_step`).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParseError, ValidationError

COMM, COMP = 0, 1


@dataclass(frozen=True)
class TwoModeProfile:
    """Square-wave load alternating between communication and computation.

    Mean injections are in p.u. (negative for loads); fluctuation bounds are
    magnitudes. The trace starts in communication mode, shifted by
    ``phase_offset`` seconds.
    """

    p_bar_comm: float
    p_bar_comp: float
    w_bound_comm: float = 0.0
    w_bound_comp: float = 0.0
    period_comm: float = 60.0
    period_comp: float = 60.0
    noise_seed: int = 0
    phase_offset: float = 0.0

    def validate(self):
        problems = []
        if abs(self.p_bar_comp) < abs(self.p_bar_comm):
            problems.append("computation mode must draw at least as much power as communication mode")
        half_gap = abs(self.p_bar_comm - self.p_bar_comp) / 2
        for name in ("w_bound_comm", "w_bound_comp"):
            w = getattr(self, name)
            if w < 0:
                problems.append(f"{name} must be non-negative")
            elif w > 0 and w >= half_gap:
                problems.append(f"{name}={w} must be below half the level separation ({half_gap})")
        if self.period_comm <= 0 or self.period_comp <= 0:
            problems.append("phase durations must be positive")
        if problems:
            raise ValidationError("; ".join(problems))

    def mean(self, mode):
        return self.p_bar_comp if mode == COMP else self.p_bar_comm

    def mode_sequence(self, n_steps, dt):
        t = np.arange(n_steps) * dt + self.phase_offset
        cycle = self.period_comm + self.period_comp
        # small guard so phase boundaries that land on a sample are not lost to rounding
        frac = np.mod(t + 1e-9 * dt, cycle)
        return (frac >= self.period_comm).astype(np.int8)

    def column(self, n_steps, dt, rng=None):
        """One bus worth of samples and the matching mode sequence."""
        modes = self.mode_sequence(n_steps, dt)
        mean = np.where(modes == COMP, self.p_bar_comp, self.p_bar_comm)
        bound = np.where(modes == COMP, self.w_bound_comp, self.w_bound_comm)
        if rng is None:
            rng = np.random.default_rng(self.noise_seed)
        w = rng.uniform(-1.0, 1.0, size=n_steps) * bound
        return mean + w, modes


@dataclass
class WorkloadTrace:
    """Per-bus injections on a uniform time grid.

    ``samples`` has shape ``(steps, n)``. ``modes`` is the ground-truth mode
    sequence when the trace is synthetic, otherwise ``None``.
    """

    dt: float
    samples: np.ndarray
    modes: np.ndarray | None = None
    dc_bus: int | None = None
    profile: TwoModeProfile | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.modes is not None and len(self.modes) != len(self.samples):
            raise ValidationError("mode sequence length does not match sample count")

    @property
    def steps(self):
        return self.samples.shape[0]

    @property
    def time(self):
        return np.arange(self.steps) * self.dt


def generate_trace(profile: TwoModeProfile, duration, dt, dc_bus, background) -> WorkloadTrace:
    """Synthetic two-mode trace at state position ``dc_bus``.

    Every other bus holds its ``background`` injection for the whole run; the
    data-center bus gets the square wave plus uniform noise bounded by the
    current mode's fluctuation bound.
    """
    if duration <= 0 or dt <= 0:
        raise ValidationError("duration and dt must be positive")
    profile.validate()
    background = np.asarray(background, dtype=float)
    if not 0 <= dc_bus < background.size:
        raise ValidationError(f"dc_bus {dc_bus} outside 0..{background.size - 1}")
    n_steps = int(round(duration / dt))
    col, modes = profile.column(n_steps, dt)
    samples = np.tile(background, (n_steps, 1))
    samples[:, dc_bus] = col
    return WorkloadTrace(dt, samples, modes, dc_bus, profile)


def load_trace_csv(path, dt, dc_bus=None, scale=1.0) -> WorkloadTrace:
    """Read a ``time_s,power_watts`` CSV, zero-order-hold resample to ``dt``.

    Values are multiplied by ``scale`` (p.u. per watt); pass a negative scale
    to turn measured consumption into an injection.
    """
    times, power = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty trace file", path)
        if [h.strip() for h in header] != ["time_s", "power_watts"]:
            raise ParseError(f"expected header 'time_s,power_watts', got {','.join(header)!r}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, found {len(row)}", path, lineno)
            try:
                t, pw = float(row[0]), float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric row {row!r}", path, lineno) from None
            if times and t <= times[-1]:
                raise ParseError("timestamps must be strictly increasing", path, lineno)
            times.append(t)
            power.append(pw)
    if not times:
        raise ParseError("trace file has no samples", path)

    times = np.asarray(times)
    power = np.asarray(power)
    n_out = int(np.floor((times[-1] - times[0]) / dt + 1e-9)) + 1
    grid = times[0] + np.arange(n_out) * dt
    # zero-order hold: last reading at or before each grid point
    idx = np.searchsorted(times, grid + 1e-9 * dt, side="right") - 1
    return WorkloadTrace(dt, power[idx] * scale, None, dc_bus)


@dataclass
class StorageSmoother:
    """Battery that offsets deviations of the load from its rolling mean.

    Works on consumption (positive = drawing power). ``z > 0`` discharges.
    ``energy_capacity`` is in p.u.·s; ``horizon`` is the averaging window in
    seconds.
    """

    k_p: float = 0.6
    horizon: float = 100.0
    energy_capacity: float = 1.0
    soc: float = 0.95
    soc_band: tuple = (0.93, 0.97)
    history: list = field(default_factory=list, repr=False)

    @classmethod
    def sized_for(cls, peak_power, backup_seconds=60.0, **kw):
        """Capacity that supplies ``peak_power`` for ``backup_seconds``."""
        return cls(energy_capacity=abs(peak_power) * backup_seconds, **kw)


def rolling_mean(history, p_now, horizon, dt):
    """Mean over the last ``horizon`` seconds including ``p_now``.

    Averages whatever samples exist when the history is shorter.
    """
    n = int(round(horizon / dt)) + 1
    window = list(history[-(n - 1):]) + [p_now] if n > 1 else [p_now]
    return float(np.mean(window))


def smooth_step(smoother: StorageSmoother, p_now, history, dt):
    """One dispatch decision. Returns ``(z, p_net, updated_smoother)``.

    ``history`` holds the raw consumption samples preceding ``p_now``.
    Dispatch is blocked whenever the resulting state of charge would leave
    the configured band (or [0, 1]).
    """
    mean = rolling_mean(history, p_now, smoother.horizon, dt)
    z = smoother.k_p * (p_now - mean)
    soc_next = smoother.soc - z * dt / smoother.energy_capacity
    lo, hi = smoother.soc_band
    if not (lo <= soc_next <= hi and 0.0 <= soc_next <= 1.0):
        z = 0.0
        soc_next = smoother.soc
    return z, p_now - z, replace(smoother, soc=soc_next)


def smooth_series(consumption, dt, smoother: StorageSmoother, start_index=0):
    """Apply the smoother to a whole consumption series.

    Dispatch is zero before ``start_index``; the rolling mean always sees the
    raw history. Returns ``(net, z, soc)`` arrays.
    """
    consumption = np.asarray(consumption, dtype=float)
    n = consumption.size
    z = np.zeros(n)
    soc = np.empty(n)
    window = int(round(smoother.horizon / dt)) + 1
    csum = np.concatenate(([0.0], np.cumsum(consumption)))
    lo, hi = smoother.soc_band
    level = smoother.soc
    cap = smoother.energy_capacity
    kp = smoother.k_p
    for k in range(n):
        if k >= start_index:
            a = max(0, k + 1 - window)
            mean = (csum[k + 1] - csum[a]) / (k + 1 - a)
            zk = kp * (consumption[k] - mean)
            nxt = level - zk * dt / cap
            if lo <= nxt <= hi and 0.0 <= nxt <= 1.0:
                z[k] = zk
                level = nxt
        soc[k] = level
    return consumption - z, z, soc
