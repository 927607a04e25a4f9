"""Droop controllers with fixed and switching voltage references.

Both controllers share :func:`droop_update`; they differ only in the
reference handed to it. The switching reference adapts per bus from local
voltage samples and never reads another bus's state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ControlLimits:
    deadband: float = 0.02
    dq_max: float = 0.01

    def __post_init__(self):
        if self.deadband < 0:
            raise ValidationError("deadband must be non-negative")
        if not self.dq_max > 0:
            raise ValidationError("dq_max must be positive")


# deadband off, saturation off
UNLIMITED = ControlLimits(0.0, np.inf)


@dataclass(frozen=True)
class DroopGain:
    """Diagonal droop gain; zero entries mark buses without an actuator."""

    K: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 1:
            raise ValidationError("gain must be a vector of diagonal entries")
        if np.any(K < 0):
            raise ValidationError("gains must be non-negative")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def actuated(self):
        return frozenset(np.flatnonzero(self.K > 0).tolist())

    @classmethod
    def uniform(cls, n, k, actuated=None):
        K = np.zeros(n)
        K[list(range(n)) if actuated is None else list(actuated)] = k
        return cls(K)

    @classmethod
    def default(cls, X, actuated=None):
        """``k = 1 / lambda_max(X)`` on every actuated bus."""
        k = 1.0 / np.linalg.eigvalsh(X)[-1]
        return cls.uniform(X.shape[0], k, actuated)


def droop_update(q, v, v_ref, K: DroopGain, limits: ControlLimits):
    """One droop step. Returns ``(q_next, dq)``.

    Errors inside the deadband produce no action; the rest are scaled by the
    gain and clipped to ``+-dq_max``.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    v_ref = np.asarray(v_ref, dtype=float)
    n = K.K.size
    if q.shape != (n,) or v.shape != (n,) or v_ref.shape != (n,):
        raise ValidationError(f"expected vectors of length {n}")
    e = v - v_ref
    dq = np.where(np.abs(e) <= limits.deadband, 0.0, -K.K * e)
    if np.isfinite(limits.dq_max):
        dq = np.clip(dq, -limits.dq_max, limits.dq_max)
    return q + dq, dq


def fixed_reference(n):
    if n <= 0:
        raise ValidationError("bus count must be positive")
    return np.ones(n)


@dataclass
class SwitchingRefState:
    """Per-bus adaptation state of the switching reference.

    ``window`` is a ring buffer of the last ``L = max(L_a, L_b)`` voltage
    samples (rows are time, oldest first once ``count >= L``). Adaptation
    starts once ``warmup`` samples have been seen; until then the reference
    equals ``bias`` (initially 1), which is the fixed-reference controller.
    """

    n: int
    L_a: int = 120
    L_b: int = 120
    eta_b: float = 0.005
    warmup: int | None = None
    adapt: bool = True
    bias: np.ndarray = None
    amp: np.ndarray = None
    sign: np.ndarray = None
    window: np.ndarray = field(default=None, repr=False)
    count: int = 0

    def __post_init__(self):
        if self.L_a < 2 or self.L_b < 1:
            raise ValidationError("window lengths must be L_a >= 2 and L_b >= 1")
        if not 0 < self.eta_b <= 1:
            raise ValidationError("eta_b must lie in (0, 1]")
        if self.warmup is None:
            self.warmup = self.L
        if self.bias is None:
            self.bias = np.ones(self.n)
        if self.amp is None:
            self.amp = np.zeros(self.n)
        if self.sign is None:
            self.sign = -np.ones(self.n)
        if self.window is None:
            self.window = np.empty((self.L, self.n))

    @property
    def L(self):
        return max(self.L_a, self.L_b)

    def push(self, v):
        self.window[self.count % self.L] = v
        self.count += 1

    def recent(self, length, bus=None):
        """Most recent ``min(length, count)`` samples, oldest first."""
        m = min(length, self.count, self.L)
        idx = (self.count - m + np.arange(m)) % self.L
        return self.window[idx] if bus is None else self.window[idx, bus]

    @property
    def reference(self):
        return self.bias + self.sign * self.amp


def update_amplitude(state: SwitchingRefState, bus=None):
    """Half the largest one-step voltage change over the last ``L_a`` samples.

    ``bus=None`` updates every bus. With fewer than two samples the amplitude
    is left unchanged.
    """
    w = state.recent(state.L_a, bus)
    if w.shape[0] < 2:
        return state.amp if bus is None else state.amp[bus]
    a = 0.5 * np.max(np.abs(np.diff(w, axis=0)), axis=0)
    if bus is None:
        state.amp[:] = a
    else:
        state.amp[bus] = a
    return a


def bias_correction(samples):
    """Offset of the midpoint of the observed range from 1 p.u."""
    return 0.5 * (np.max(samples, axis=0) + np.min(samples, axis=0)) - 1.0


def update_bias(state: SwitchingRefState, bus=None):
    """Move the bias against the window midpoint's offset from 1 p.u."""
    w = state.recent(state.L_b, bus)
    if w.shape[0] < 1:
        return state.bias if bus is None else state.bias[bus]
    db = bias_correction(w)
    if bus is None:
        state.bias -= state.eta_b * db
        return state.bias
    state.bias[bus] -= state.eta_b * db
    return state.bias[bus]


def select_sign(state: SwitchingRefState, v_now):
    """+1 where the voltage sits above the bias, -1 otherwise (ties included)."""
    state.sign[:] = np.where(np.asarray(v_now) > state.bias, 1.0, -1.0)
    return state.sign


def switching_reference_step(state: SwitchingRefState, v_now):
    """Record a measurement, adapt, and return the reference for this instant.

    Order: push sample, amplitude, bias, sign. Adaptation is skipped while
    fewer than ``warmup`` samples have been seen or when ``adapt`` is off.
    """
    v_now = np.asarray(v_now, dtype=float)
    state.push(v_now)
    if state.adapt and state.count >= state.warmup:
        update_amplitude(state)
        update_bias(state)
        select_sign(state, v_now)
    return state.reference.copy(), state


class FixedReferenceController:
    name = "fixed"

    def __init__(self, n):
        self.n = n
        self._ref = fixed_reference(n)

    def reference(self, v, step=None):
        return self._ref

    def snapshot(self):
        return None


class SwitchingReferenceController:
    name = "switching"

    def __init__(self, n, L_a=120, L_b=120, eta_b=0.005, warmup=None, adapt=True):
        self.state = SwitchingRefState(n, L_a, L_b, eta_b, warmup, adapt)

    def reference(self, v, step=None):
        ref, _ = switching_reference_step(self.state, v)
        return ref

    def snapshot(self):
        s = self.state
        return s.sign.copy(), s.amp.copy(), s.bias.copy()


class ScheduledReferenceController:
    """Reference taken from a precomputed per-sim-step table.

    Used to inject oracle references (e.g. mode-matched levels built from the
    ground-truth mode sequence).
    """

    name = "scheduled"

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)

    def reference(self, v, step=None):
        return self.table[step]

    def snapshot(self):
        return None
