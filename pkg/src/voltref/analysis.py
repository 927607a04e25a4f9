"""Error dynamics of droop control around a moving reference.

With ``e_t = v_t - v_ref_t`` the closed loop (no deadband, no saturation)
obeys ``e_{t+1} = (I - X K) e_t + d_t`` where ``d_t = R dp_t - dv_ref_t``.
This module builds contraction certificates ``|A^k| <= C eps^k`` for that
recursion, the bounds they imply, and the reference designs that cancel the
mode-switching part of ``d_t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import DroopGain
from .errors import ValidationError

PD_TOL = 1e-10
EMPIRICAL_HORIZON = 1000
COND_LIMIT = 1e8


def _gain_vector(K, n):
    k = K.K if isinstance(K, DroopGain) else np.asarray(K, dtype=float)
    if k.ndim == 0:
        k = np.full(n, float(k))
    if k.shape != (n,):
        raise ValidationError(f"gain must have {n} diagonal entries")
    return k


def check_spd(M, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValidationError(f"{name} must be symmetric")
    w, Q = np.linalg.eigh(M)
    if w[0] <= PD_TOL:
        raise ValidationError(f"{name} is not positive definite (smallest eigenvalue {w[0]:.3g})")
    return w, Q


def sqrtm_spd(M):
    w, Q = check_spd(M)
    return (Q * np.sqrt(w)) @ Q.T


@dataclass
class ErrorSystem:
    """``e_{t+1} = A e_t + d_t`` with ``A = I - X diag(K)``."""

    X: np.ndarray
    R: np.ndarray
    K: np.ndarray
    A: np.ndarray = field(init=False)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.K = _gain_vector(self.K, self.X.shape[0])
        self.A = np.eye(self.X.shape[0]) - self.X * self.K[None, :]

    @classmethod
    def from_feeder(cls, model, K):
        return cls(model.X, model.R, K)


@dataclass
class ContractionCertificate:
    """``|A^k| <= C * epsilon**k`` elementwise for all ``k >= 0`` when valid.

    ``symmetric_eigs`` are the eigenvalues of ``I - X^1/2 K X^1/2``; the gain
    is admissible iff they all lie in (-1, 1). ``empirical`` marks
    certificates whose ``C`` was fitted from explicit matrix powers rather
    than taken from the eigendecomposition.
    """

    C: np.ndarray
    epsilon: float
    valid: bool
    symmetric_eigs: np.ndarray
    empirical: bool = False
    horizon: int | None = None

    @property
    def margin(self):
        return 1.0 - float(np.max(np.abs(self.symmetric_eigs)))

    def as_dict(self):
        return {
            "valid": bool(self.valid),
            "epsilon": float(self.epsilon),
            "margin": self.margin,
            "empirical": bool(self.empirical),
            "C_max": float(np.max(self.C)) if self.C.size else 0.0,
            "C_diag_min": float(np.min(np.diag(self.C))) if self.C.size else 0.0,
        }


def validate_gain(X, K, horizon=EMPIRICAL_HORIZON) -> ContractionCertificate:
    """Check ``0 < K < 2 X^-1`` and build a contraction certificate.

    ``A = I - X K`` equals ``X^1/2 S X^-1/2`` with the symmetric
    ``S = I - X^1/2 K X^1/2 = Q diag(lam) Q^T``, so ``P = X^1/2 Q`` gives the
    eigendecomposition of ``A`` and ``C = |P| |P^-1|``. If ``P`` is too
    ill-conditioned to trust, ``C`` is instead fitted as the elementwise
    maximum of ``|A^k| / eps^k`` over ``k <= horizon``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    w, Qx = check_spd(X, "X")
    k = _gain_vector(K, n)
    Xh = (Qx * np.sqrt(w)) @ Qx.T
    Xih = (Qx / np.sqrt(w)) @ Qx.T
    S = np.eye(n) - Xh @ (k[:, None] * Xh)
    S = 0.5 * (S + S.T)
    lam, Q = np.linalg.eigh(S)
    valid = bool(np.all(np.abs(lam) < 1.0))
    eps = float(np.max(np.abs(lam)))

    P = Xh @ Q
    Pinv = Q.T @ Xih
    empirical = np.linalg.cond(P) > COND_LIMIT
    if empirical and valid and eps > 0:
        A = np.eye(n) - X * k[None, :]
        C = np.eye(n)
        Ak = np.eye(n)
        scale = 1.0
        for _ in range(horizon):
            Ak = Ak @ A
            scale *= eps
            if scale < 1e-300:
                break
            C = np.maximum(C, np.abs(Ak) / scale)
    else:
        C = np.abs(P) @ np.abs(Pinv)
    return ContractionCertificate(C, eps, valid, lam, bool(empirical), horizon if empirical else None)


def gain_in_region(X, K):
    """Direct test of ``0 < K < 2 X^-1`` via eigenvalues of ``K`` and ``2X^-1 - K``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = _gain_vector(K, X.shape[0])
    upper = 2.0 * np.linalg.inv(X) - np.diag(k)
    return bool(np.all(k > 0) and np.linalg.eigvalsh(0.5 * (upper + upper.T))[0] > 0)


def step_error(system: ErrorSystem, e, d):
    return system.A @ np.asarray(e, dtype=float) + np.asarray(d, dtype=float)


def error_trajectory(system: ErrorSystem, e0, d_seq):
    """Iterate the recursion; row ``t`` of the result is ``e_t``."""
    d_seq = np.atleast_2d(np.asarray(d_seq, dtype=float))
    out = np.empty((d_seq.shape[0] + 1, system.A.shape[0]))
    out[0] = e0
    for t, d in enumerate(d_seq):
        out[t + 1] = system.A @ out[t] + d
    return out


def disturbance(R, dp, dv_ref):
    """``R dp - dv_ref``; accepts single vectors or stacked rows."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return np.asarray(dp, dtype=float) @ R.T - np.asarray(dv_ref, dtype=float)


def disturbance_sequence(R, p, v_ref):
    """Disturbances between consecutive rows of ``p`` and ``v_ref``."""
    return disturbance(R, np.diff(p, axis=0), np.diff(v_ref, axis=0))


def mode_voltage_shift(R, p_bar_0, p_bar_1):
    return np.atleast_2d(np.asarray(R, dtype=float)) @ (np.asarray(p_bar_0, dtype=float) - np.asarray(p_bar_1, dtype=float))


def ideal_mode_references(R, p_bar_0, p_bar_1, b):
    """Reference levels ``(b + shift/2, b - shift/2)`` for modes 0 and 1."""
    half = 0.5 * mode_voltage_shift(R, p_bar_0, p_bar_1)
    b = np.asarray(b, dtype=float)
    return b + half, b - half


@dataclass
class SteadyStateExtrema:
    v_plus: np.ndarray
    v_minus: np.ndarray
    per_mode: dict | None = None

    def __post_init__(self):
        self.v_plus = np.asarray(self.v_plus, dtype=float)
        self.v_minus = np.asarray(self.v_minus, dtype=float)
        if np.any(self.v_minus > self.v_plus):
            raise ValidationError("v_minus must not exceed v_plus")


def optimal_bias(extrema: SteadyStateExtrema, b):
    """Bias that centres the steady-state voltage range on 1 p.u."""
    return np.asarray(b, dtype=float) - (0.5 * (extrema.v_plus + extrema.v_minus) - 1.0)


def worst_deviation(extrema: SteadyStateExtrema, shift=0.0):
    return np.maximum(np.abs(extrema.v_plus + shift - 1.0), np.abs(extrema.v_minus + shift - 1.0))


def measure_extrema(v, window=None, modes=None):
    """Componentwise max/min of the last ``window`` rows of ``v``.

    When ``modes`` (one entry per row) is given, per-mode extrema are
    recorded as well.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    window = v.shape[0] if window is None else int(window)
    if window <= 0:
        raise ValidationError("extrema window is empty")
    if window > v.shape[0]:
        raise ValidationError(f"window {window} longer than trace ({v.shape[0]})")
    tail = v[-window:]
    per_mode = None
    if modes is not None:
        m = np.asarray(modes)[-window:]
        per_mode = {int(k): (tail[m == k].max(axis=0), tail[m == k].min(axis=0)) for k in np.unique(m)}
    return SteadyStateExtrema(tail.max(axis=0), tail.min(axis=0), per_mode)


def theorem_bound(cert: ContractionCertificate, e0, d_seq):
    """Per-step right-hand side of the transient bound.

    Row ``t`` bounds ``|e_t|`` by ``C (eps^t |e0| + sum_{tau<t} eps^(t-1-tau) |d_tau|)``.
    """
    if not cert.valid:
        raise ValidationError("certificate is not valid; no bound available")
    d_seq = np.atleast_2d(np.abs(np.asarray(d_seq, dtype=float)))
    s = np.empty((d_seq.shape[0] + 1, cert.C.shape[0]))
    s[0] = np.abs(e0)
    for t, d in enumerate(d_seq):
        s[t + 1] = cert.epsilon * s[t] + d
    return s @ cert.C.T


def limit_bound(cert: ContractionCertificate, d_bar):
    """Asymptotic bound ``C d_bar / (1 - eps)`` under ``|d_t| <= d_bar``."""
    if not cert.valid:
        raise ValidationError("certificate is not valid; no bound available")
    return cert.C @ np.asarray(d_bar, dtype=float) / (1.0 - cert.epsilon)


def burn_in_steps(cert: ContractionCertificate):
    return int(np.ceil(3.0 / (1.0 - cert.epsilon)))
