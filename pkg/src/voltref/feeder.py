"""Radial feeder model under the LinDistFlow linearization.

Voltages are affine in the bus injections::

    v = R p + X q + 1

where ``R`` and ``X`` are built from the path impedances between the slack
bus and every other bus. Loads are negative injections. The slack bus is not
part of the state vectors; its 1 p.u. voltage enters through the constant
term.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, TopologyError, ValidationError

DEFAULT_BASE_POWER_MVA = 10.0
DEFAULT_BASE_VOLTAGE_KV = 12.66


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float


@dataclass(frozen=True, eq=False)
class FeederModel:
    """Immutable LinDistFlow model of a radial feeder.

    ``buses`` lists the non-slack bus ids in state-vector order; ``R`` and
    ``X`` are indexed the same way.
    """

    buses: tuple
    slack: int
    lines: tuple
    R: np.ndarray
    X: np.ndarray
    base_power: float = DEFAULT_BASE_POWER_MVA
    base_voltage: float = DEFAULT_BASE_VOLTAGE_KV
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.R.setflags(write=False)
        self.X.setflags(write=False)
        self._pos.update({b: i for i, b in enumerate(self.buses)})

    @property
    def n(self) -> int:
        return len(self.buses)

    def index(self, bus: int) -> int:
        """State-vector position of ``bus``."""
        try:
            return self._pos[bus]
        except KeyError:
            if bus == self.slack:
                raise ValidationError(f"bus {bus} is the slack bus") from None
            raise ValidationError(f"unknown bus {bus}") from None

    def solve(self, p, q) -> np.ndarray:
        return solve_voltage(self, p, q)


def _tree_paths(lines, slack):
    """Map each non-slack bus to the indices of the lines on its slack path."""
    adj: dict[int, list[tuple[int, int]]] = {}
    for k, ln in enumerate(lines):
        adj.setdefault(ln.from_bus, []).append((ln.to_bus, k))
        adj.setdefault(ln.to_bus, []).append((ln.from_bus, k))
    if slack not in adj:
        raise TopologyError(f"slack bus {slack} is not connected to any line")

    paths = {slack: ()}
    queue = deque([slack])
    while queue:
        u = queue.popleft()
        for w, k in adj[u]:
            if w in paths:
                if paths[u] and paths[u][-1] == k:
                    continue  # the edge we came in on
                raise TopologyError(f"cycle detected through line {lines[k].from_bus}-{lines[k].to_bus}")
            paths[w] = paths[u] + (k,)
            queue.append(w)

    unreachable = sorted(set(adj) - set(paths))
    if unreachable:
        raise TopologyError(f"buses not reachable from slack: {unreachable}")
    return paths


def build_feeder(lines, slack: int = 1, base_power=DEFAULT_BASE_POWER_MVA,
                 base_voltage=DEFAULT_BASE_VOLTAGE_KV) -> FeederModel:
    """Build R and X from a radial line list with impedances already in p.u.

    ``lines`` holds ``(from, to, r, x)`` tuples or :class:`Line` objects.
    ``R[i, j]`` is twice the resistance summed over the lines shared by the
    slack paths of buses ``i`` and ``j``; ``X`` likewise with reactance.
    """
    lines = tuple(ln if isinstance(ln, Line) else Line(int(ln[0]), int(ln[1]), float(ln[2]), float(ln[3]))
                  for ln in lines)
    if not lines:
        raise TopologyError("feeder has no lines")
    for ln in lines:
        if not (ln.r > 0 and ln.x > 0):
            raise ValidationError(f"line {ln.from_bus}-{ln.to_bus} has non-positive impedance r={ln.r}, x={ln.x}")
        if ln.from_bus == ln.to_bus:
            raise TopologyError(f"self-loop at bus {ln.from_bus}")

    seen_to: dict[int, int] = {}
    for ln in lines:
        if ln.to_bus in seen_to:
            raise TopologyError(f"bus {ln.to_bus} is the to-bus of more than one line")
        seen_to[ln.to_bus] = ln.from_bus

    paths = _tree_paths(lines, slack)
    buses = tuple(sorted(b for b in paths if b != slack))
    if len(lines) != len(buses):
        raise TopologyError(f"{len(lines)} lines for {len(buses)} non-slack buses; not a tree")

    # incidence of lines on slack paths: M[k, i] = 1 if line k feeds bus i
    M = np.zeros((len(lines), len(buses)))
    for i, b in enumerate(buses):
        M[list(paths[b]), i] = 1.0
    r = np.array([ln.r for ln in lines])
    x = np.array([ln.x for ln in lines])
    R = 2.0 * M.T @ (r[:, None] * M)
    X = 2.0 * M.T @ (x[:, None] * M)
    return FeederModel(buses, slack, lines, R, X, float(base_power), float(base_voltage))


def solve_voltage(model: FeederModel, p, q) -> np.ndarray:
    """Bus voltage magnitudes (p.u.) for active/reactive injections ``p``, ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != (model.n,) or q.shape != (model.n,):
        raise ValidationError(f"expected injection vectors of length {model.n}, got {p.shape} and {q.shape}")
    return model.R @ p + model.X @ q + 1.0


def ohm_to_pu(z_ohm, base_power=DEFAULT_BASE_POWER_MVA, base_voltage=DEFAULT_BASE_VOLTAGE_KV):
    return z_ohm * base_power / base_voltage**2


def _read_table(path, ncols, what):
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != ncols:
                raise ParseError(f"expected {ncols} columns in {what}, found {len(parts)}", path, lineno)
            try:
                rows.append((lineno, [float(s) for s in parts]))
            except ValueError:
                raise ParseError(f"non-numeric field in {what}: {text!r}", path, lineno) from None
    if not rows:
        raise ParseError(f"no rows in {what}", path)
    return rows


def read_line_table(path, base_power=DEFAULT_BASE_POWER_MVA, base_voltage=DEFAULT_BASE_VOLTAGE_KV):
    """Parse a ``from to r_ohm x_ohm`` table into p.u. :class:`Line` objects."""
    out = []
    for lineno, (f, t, r, x) in _read_table(path, 4, "line table"):
        if f != int(f) or t != int(t):
            raise ParseError("bus ids must be integers", path, lineno)
        out.append(Line(int(f), int(t), ohm_to_pu(r, base_power, base_voltage),
                        ohm_to_pu(x, base_power, base_voltage)))
    return out


def ieee33_path() -> Path:
    return Path(str(resources.files("voltref") / "data" / "ieee33_lines.txt"))


def load_ieee33(path=None, base_power=DEFAULT_BASE_POWER_MVA, base_voltage=DEFAULT_BASE_VOLTAGE_KV) -> FeederModel:
    """Load a 33-bus line table (defaults to the bundled copy), slack at bus 1."""
    path = ieee33_path() if path is None else Path(path)
    lines = read_line_table(path, base_power, base_voltage)
    slack = 1
    return build_feeder(lines, slack, base_power, base_voltage)


def ieee33_loads(model: FeederModel, path=None):
    """Nominal 33-bus loads as injection vectors ``(p, q)`` in p.u. (negative)."""
    path = Path(str(resources.files("voltref") / "data" / "ieee33_loads.txt")) if path is None else Path(path)
    p = np.zeros(model.n)
    q = np.zeros(model.n)
    for lineno, (bus, pk, qk) in _read_table(path, 3, "load table"):
        i = model.index(int(bus))
        p[i] = -pk / (model.base_power * 1e3)
        q[i] = -qk / (model.base_power * 1e3)
    return p, q
