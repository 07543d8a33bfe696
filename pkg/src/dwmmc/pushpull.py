"""Push-pull pulse planning and execution.

A Langevin update ``dg = step + N(0, noise_var)`` is realised by a positive
(push) pulse followed by a negative (pull) pulse. Both pulses share a
symmetric width ``T_sym`` that supplies the noise; the asymmetry ``T_L`` added
to one side supplies the mean. The variance incurred by ``T_L`` is subtracted
from the noise budget before ``T_sym`` is chosen, so in the nominal regime the
realised distribution is exactly ``N(step, noise_var)``.

Every function here is vectorised: fields of :class:`UpdateRequest` and
:class:`PulsePlan` may be scalars or equal-shape arrays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import llg
from .devices import CalibrationTable

NOMINAL, LOWER_CLAMPED, UPPER_CLAMPED = 0, 1, 2
REGIME_NAMES = {NOMINAL: "nominal", LOWER_CLAMPED: "lower-clamped", UPPER_CLAMPED: "upper-clamped"}


@dataclass(frozen=True)
class UpdateRequest:
    """Desired mean change ``grad_step`` and target variance ``noise_var`` (2 tau)."""

    grad_step: float | np.ndarray
    noise_var: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.noise_var) < 0):
            raise ValueError("noise_var must be >= 0")


@dataclass(frozen=True)
class PulsePlan:
    push_width: float | np.ndarray
    pull_width: float | np.ndarray
    T_L: float | np.ndarray
    T_sym: float | np.ndarray
    regime: int | np.ndarray

    @property
    def regime_name(self):
        if np.ndim(self.regime):
            return np.vectorize(REGIME_NAMES.get)(self.regime)
        return REGIME_NAMES[int(self.regime)]


@dataclass(frozen=True)
class PlannedDistribution:
    mean: float | np.ndarray
    var: float | np.ndarray
    # variance of the planner's bookkeeping, 2 var(T_sym) + var(T_L); differs
    # from ``var`` only for non-linear tables
    absorbed_var: float | np.ndarray = 0.0

    @property
    def absorption_error(self):
        return self.var - self.absorbed_var


def _out(a, scalar):
    return float(a) if scalar else a


def plan(req: UpdateRequest, table: CalibrationTable) -> PulsePlan:
    """Choose push/pull widths realising ``req`` on a device described by ``table``."""
    g = np.asarray(req.grad_step, dtype=float)
    nv = np.asarray(req.noise_var, dtype=float)
    scalar = g.ndim == 0 and nv.ndim == 0
    g, nv = np.broadcast_arrays(g, nv)

    T_L = np.asarray(table.mean_to_width(np.abs(g)), dtype=float)
    T_min = table.T_min
    if table.noiseless:
        if np.any(nv > 0):
            raise ValueError("a noiseless calibration cannot supply noise_var > 0")
        T_sym = np.full(g.shape, T_min)
        regime = np.full(g.shape, NOMINAL, dtype=np.int8)
    else:
        resid = nv - np.asarray(table.var(T_L), dtype=float)
        upper = resid < 0
        raw = np.asarray(table.var_to_width_unclamped(np.maximum(resid, 0.0) / 2.0))
        lower = ~upper & (raw < T_min)
        T_sym = np.where(upper | lower, T_min, raw)
        regime = np.where(upper, UPPER_CLAMPED, np.where(lower, LOWER_CLAMPED, NOMINAL)).astype(np.int8)

    push = T_sym + np.where(g > 0, T_L, 0.0)
    pull = T_sym + np.where(g < 0, T_L, 0.0)
    return PulsePlan(_out(push, scalar), _out(pull, scalar), _out(T_L, scalar),
                     _out(T_sym, scalar), int(regime) if scalar else regime)


def plan_fixed_symmetric(grad_step, table: CalibrationTable) -> PulsePlan:
    """Plan with ``T_sym`` pinned at ``T_min``; noise is parasitic rather than targeted."""
    g = np.asarray(grad_step, dtype=float)
    T_L = np.asarray(table.mean_to_width(np.abs(g)), dtype=float)
    T_sym = np.full(g.shape, table.T_min)
    push = T_sym + np.where(g > 0, T_L, 0.0)
    pull = T_sym + np.where(g < 0, T_L, 0.0)
    scalar = g.ndim == 0
    regime = np.zeros(g.shape, dtype=np.int8)
    return PulsePlan(_out(push, scalar), _out(pull, scalar), _out(T_L, scalar),
                     _out(T_sym, scalar), 0 if scalar else regime)


def planned_distribution(p: PulsePlan, table: CalibrationTable) -> PlannedDistribution:
    mean = np.asarray(table.mean(p.push_width)) - np.asarray(table.mean(p.pull_width))
    var = np.asarray(table.var(p.push_width)) + np.asarray(table.var(p.pull_width))
    absorbed = 2.0 * np.asarray(table.var(p.T_sym)) + np.asarray(table.var(p.T_L))
    scalar = np.ndim(p.push_width) == 0
    return PlannedDistribution(_out(mean, scalar), _out(var, scalar), _out(absorbed, scalar))


def execute_sampled(p: PulsePlan, table: CalibrationTable, rng: np.random.Generator):
    """Draw the conductance change of the push minus that of the pull."""
    shape = np.shape(p.push_width)
    push = table.mean(p.push_width) + np.sqrt(table.var(p.push_width)) * rng.standard_normal(shape)
    pull = table.mean(p.pull_width) + np.sqrt(table.var(p.pull_width)) * rng.standard_normal(shape)
    dg = np.asarray(push - pull)
    return dg if dg.ndim else float(dg)


def execute_physical(p: PulsePlan, state: llg.DwState, params: llg.LlgParams,
                     rng: np.random.Generator, scale: float,
                     current_density: float = 1.0e12) -> tuple[np.ndarray | float, llg.DwState]:
    """Run the plan through the domain-wall simulator.

    The push is applied first, then the pull, each followed by the
    zero-current settle interval used during calibration; no intermediate read
    is modelled. ``state`` may hold an ensemble of walls sharing one plan. Returns ``(dg, final_state)`` with ``dg`` in weight units
    (``scale`` is weight units per metre of travel).
    """
    if np.ndim(p.push_width):
        raise ValueError("execute_physical takes a scalar plan")
    x_before = np.copy(state.x)
    shape = np.shape(state.x)
    draw = lambda m: rng.standard_normal((m, *shape))
    s = state
    for width, pol in ((p.push_width, 1), (p.pull_width, -1)):
        if width > 0:
            s = llg.apply_pulse(s, llg.PulseSpec(width, pol, current_density), params, rng)
            x, phi = llg.settle(np.asarray(s.x, dtype=float), np.asarray(s.phi, dtype=float),
                                params, draw)
            s = llg.DwState(x if shape else float(x), phi if shape else float(phi))
    dg = (np.asarray(s.x) - x_before) * scale
    return (dg if dg.ndim else float(dg)), s


TRACE_HEADER = ["param_id", "step", "grad_step", "noise_var", "T_push_ns", "T_pull_ns",
                "regime", "dg"]


class TraceWriter:
    """Audit trail of planned and executed updates."""

    def __init__(self, path: str | Path, max_params: int | None = None):
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(TRACE_HEADER)
        self.max_params = max_params

    def write(self, step: int, req: UpdateRequest, p: PulsePlan, dg) -> None:
        g = np.atleast_1d(req.grad_step)
        n = len(g) if self.max_params is None else min(len(g), self.max_params)
        nv = np.broadcast_to(np.atleast_1d(req.noise_var), g.shape)
        push = np.atleast_1d(p.push_width)
        pull = np.atleast_1d(p.pull_width)
        reg = np.atleast_1d(p.regime)
        dg = np.atleast_1d(dg)
        for i in range(n):
            self._w.writerow([i, step, repr(float(g[i])), repr(float(nv[i])),
                              repr(float(push[i]) * 1e9), repr(float(pull[i]) * 1e9),
                              REGIME_NAMES[int(reg[i])], repr(float(dg[i]))])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
