"""Stochastic 1D Landau-Lifshitz-Gilbert model of current-driven domain-wall motion.

The wall is described by its position ``x`` along the track and its phase
``phi``. Both equations are integrated with explicit Euler-Maruyama at a fixed
time step; a periodic pinning field and a white thermal field enter as
effective magnetic fields.

All vectorised entry points accept ``x``/``phi`` as numpy arrays so that many
independent trials advance together.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import stats

from .errors import ConfigError, InsufficientTrials, NonFiniteState

# rows of noise drawn per refill; changing it does not change results
_CHUNK = 1024


@dataclass(frozen=True)
class LlgParams:
    """Material, geometry and integration constants (SI units)."""

    alpha: float = 0.07
    beta: float = 0.06
    mu_B: float = 9.2740100783e-24
    P_spin: float = 0.55
    e_charge: float = 1.602176634e-19
    M_s: float = 8.0e5
    gamma0: float = 2.21e5
    Delta: float = 5.0e-9
    # placeholder PMA values, see README ("Device parameters")
    H_K: float = 5.0e4
    V_0: float = 1.2e-20
    p_period: float = 20.0e-9
    k_B: float = 1.380649e-23
    mu_0: float = 1.25663706212e-6
    L_y: float = 60.0e-9
    L_z: float = 7.5e-9
    L_dw: float = 4.0e-6
    temperature: float = 300.0
    dt: float = 1.0e-12
    # zero-current interval after each write pulse before the position is read
    settle_time: float = 5.0e-9

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ConfigError(f"LlgParams.{f.name} must be finite, got {v}")
            # zero temperature / flat pinning are legitimate limits
            if f.name in ("temperature", "V_0", "settle_time"):
                if v < 0:
                    raise ConfigError(f"LlgParams.{f.name} must be >= 0, got {v}")
            elif v <= 0:
                raise ConfigError(f"LlgParams.{f.name} must be > 0, got {v}")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ConfigError("alpha and beta must lie in (0, 1)")

    def replace(self, **changes) -> "LlgParams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @property
    def stt_velocity_per_j(self) -> float:
        """Spin-drift velocity per unit current density, mu_B P / (e M_s)."""
        return self.mu_B * self.P_spin / (self.e_charge * self.M_s)

    @property
    def pinning_amplitude(self) -> float:
        return (self.V_0 * math.pi / self.p_period) / (
            2.0 * self.mu_0 * self.M_s * self.L_y * self.L_z
        )

    @property
    def thermal_sigma(self) -> float:
        """Standard deviation of the per-step thermal field (A/m)."""
        num = 2.0 * self.alpha * self.k_B * self.temperature
        den = (
            self.gamma0 * self.mu_0 * self.M_s * self.L_y * self.L_z
            * self.Delta * self.dt
        )
        return math.sqrt(num / den)

    def steady_velocity(self, j: float) -> float:
        """Sub-Walker terminal velocity beta/alpha * u at zero field."""
        return self.beta / self.alpha * self.stt_velocity_per_j * j


@dataclass
class DwState:
    """Wall position (m) and phase (rad); scalars or equal-shape arrays."""

    x: float | np.ndarray
    phi: float | np.ndarray = 0.0

    def copy(self) -> "DwState":
        return DwState(np.copy(self.x), np.copy(self.phi))


@dataclass(frozen=True)
class PulseSpec:
    width: float
    polarity: int = 1
    current_density: float = 1.0e12

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"pulse width must be > 0, got {self.width}")
        if self.polarity not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {self.polarity}")
        if not self.current_density > 0:
            raise ValueError("current_density must be > 0")

    @property
    def j(self) -> float:
        return self.polarity * self.current_density


@dataclass
class TrialEnsemble:
    deltas: np.ndarray
    pulse: PulseSpec
    x0: float
    n_trials: int = field(init=False)

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=float)
        self.n_trials = len(self.deltas)


def pinning_field(x, params: LlgParams):
    """Periodic pinning field H_p(x) in A/m."""
    return -params.pinning_amplitude * np.sin(2.0 * np.pi * np.asarray(x) / params.p_period)


def thermal_field(params: LlgParams, rng: np.random.Generator, size=None):
    """One (or ``size``) draws of the thermal field."""
    return params.thermal_sigma * rng.standard_normal(size)


def n_steps_for(width: float, dt: float) -> int:
    # round up, but absorb float noise such as 5e-9 / 1e-12 = 5000.000000000001
    ratio = width / dt
    n = math.ceil(ratio - 1e-9 * max(1.0, ratio))
    return max(n, 1)


def _integrate(x, phi, j, n_steps, params: LlgParams, draw: Callable[[int], np.ndarray]):
    """Advance ``n_steps`` Euler-Maruyama steps; ``draw(k)`` returns (k, *shape) unit normals."""
    x = np.array(x, dtype=float)
    phi = np.array(phi, dtype=float)
    a = params.dt / (1.0 + params.alpha ** 2)
    u = params.stt_velocity_per_j * j
    g0 = params.gamma0
    cx_j = a * (1.0 + params.alpha * params.beta) * u
    cx_s = a * g0 * params.Delta * params.H_K / 2.0
    cx_h = a * params.alpha * g0 * params.Delta
    cp_j = a * (params.beta - params.alpha) * u / params.Delta
    cp_s = a * params.alpha * g0 * params.H_K / 2.0
    cp_h = a * g0
    hp_amp = params.pinning_amplitude
    k = 2.0 * np.pi / params.p_period
    sig = params.thermal_sigma
    L = params.L_dw
    pinned = hp_amp != 0.0
    noisy = sig != 0.0

    done = 0
    while done < n_steps:
        m = min(_CHUNK, n_steps - done)
        eta = draw(m) * sig if noisy else None
        for i in range(m):
            if pinned:
                h = np.sin(k * x)
                h *= -hp_amp
                if noisy:
                    h += eta[i]
            elif noisy:
                h = eta[i]
            else:
                h = 0.0
            s = np.sin(2.0 * phi)
            x += cx_j + cx_s * s + cx_h * h
            phi += cp_j - cp_s * s + cp_h * h
            np.clip(x, 0.0, L, out=x)
        done += m
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(phi))):
            bad = np.flatnonzero(~(np.isfinite(x) & np.isfinite(phi)))
            raise NonFiniteState(
                f"non-finite domain-wall state after {done} steps; dt or parameters unstable",
                trial=int(bad[0]) if x.ndim else None,
            )
    return x, phi


def _rng_draw(rng: np.random.Generator, shape):
    return lambda m: rng.standard_normal((m, *shape))


def step(state: DwState, j: float, params: LlgParams, rng: np.random.Generator) -> DwState:
    """One explicit Euler step at signed current density ``j`` (A/m^2)."""
    shape = np.shape(state.x)
    x, phi = _integrate(state.x, state.phi, j, 1, params, _rng_draw(rng, shape))
    return DwState(x if shape else float(x), phi if shape else float(phi))


def apply_pulse(state: DwState, pulse: PulseSpec, params: LlgParams,
                rng: np.random.Generator) -> DwState:
    """Apply a rectangular pulse; widths are rounded up to a whole number of steps."""
    shape = np.shape(state.x)
    n = n_steps_for(pulse.width, params.dt)
    x, phi = _integrate(state.x, state.phi, pulse.j, n, params, _rng_draw(rng, shape))
    return DwState(x if shape else float(x), phi if shape else float(phi))


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(trial,))


class _TrialStreams:
    """Per-trial generators whose draws do not depend on how trials are batched."""

    def __init__(self, seed: int, trials: Iterable[int]):
        self.gens = [np.random.default_rng(trial_seed(seed, t)) for t in trials]

    def __call__(self, m: int) -> np.ndarray:
        out = np.empty((m, len(self.gens)))
        for c, g in enumerate(self.gens):
            out[:, c] = g.standard_normal(m)
        return out


def run_pulse_trials(x0, pulses: list[PulseSpec], n_trials: int, params: LlgParams,
                     seed: int, phi0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Apply a pulse sequence to ``n_trials`` walls starting at ``x0``.

    Each pulse is followed by ``params.settle_time`` at zero current. Returns
    final ``(x, phi)`` arrays. Trial ``i`` uses its own stream derived from
    ``(seed, i)`` and consumes it continuously across the sequence.
    """
    x = np.full(n_trials, float(x0))
    phi = np.full(n_trials, float(phi0))
    draw = _TrialStreams(seed, range(n_trials))
    for p in pulses:
        x, phi = _integrate(x, phi, p.j, n_steps_for(p.width, params.dt), params, draw)
        x, phi = settle(x, phi, params, draw)
    return x, phi


def settle(x, phi, params: LlgParams, draw):
    """Let the phase relax at zero current for ``params.settle_time``."""
    if params.settle_time <= 0:
        return x, phi
    return _integrate(x, phi, 0.0, n_steps_for(params.settle_time, params.dt), params, draw)


def run_trials(x0: float, pulse: PulseSpec, n_trials: int, params: LlgParams,
               seed: int) -> TrialEnsemble:
    """Monte Carlo ensemble of position changes for one pulse condition.

    Every trial restarts from ``(x0, phi=0)``. Because trial streams depend only
    on ``(seed, trial index)``, sweeps over ``x0`` or pulse width that reuse a
    seed are evaluated with common random numbers.
    """
    if n_trials < 2:
        raise InsufficientTrials(f"need at least 2 trials, got {n_trials}")
    if not 0.0 <= x0 <= params.L_dw:
        raise ValueError(f"x0={x0} outside [0, {params.L_dw}]")
    x, _ = run_pulse_trials(x0, [pulse], n_trials, params, seed)
    return TrialEnsemble(deltas=x - x0, pulse=pulse, x0=x0)


def fit_gaussian(ens: TrialEnsemble | np.ndarray) -> tuple[float, float]:
    """Sample mean and unbiased standard deviation of the position changes."""
    d = ens.deltas if isinstance(ens, TrialEnsemble) else np.asarray(ens, dtype=float)
    if len(d) < 2:
        raise InsufficientTrials(f"need at least 2 trials, got {len(d)}")
    return float(np.mean(d)), float(np.std(d, ddof=1))


def moments(deltas) -> tuple[float, float]:
    """(skewness, excess kurtosis) using population moments."""
    d = np.asarray(deltas, dtype=float)
    if np.ptp(d) == 0:
        return 0.0, 0.0
    return float(stats.skew(d)), float(stats.kurtosis(d, fisher=True))


def is_gaussian(deltas, max_skew: float = 0.5, max_kurt: float = 1.0) -> bool:
    s, k = moments(deltas)
    return abs(s) < max_skew and abs(k) < max_kurt


@dataclass(frozen=True)
class SummaryRow:
    pulse_width: float
    polarity: int
    mu: float
    sigma: float
    n_trials: int
    x0: float = 0.0

    @property
    def var(self) -> float:
        return self.sigma ** 2


def polarity_seed(seed: int, polarity: int) -> int:
    """Independent stream families for the two polarities."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(0 if polarity > 0 else 1,))
    return int(ss.generate_state(1)[0])


def width_sweep(params: LlgParams, widths, n_trials: int, seed: int,
                polarities=(1, -1), x0: float | None = None,
                current_density: float = 1.0e12):
    """Pulse-width characterisation; yields ``(SummaryRow, TrialEnsemble)``.

    ``x0`` defaults to the track centre so that no trial reaches a boundary.
    """
    if x0 is None:
        x0 = 0.5 * params.L_dw
    for pol in polarities:
        s = polarity_seed(seed, pol)
        for w in widths:
            ens = run_trials(x0, PulseSpec(w, pol, current_density), n_trials, params, s)
            mu, sigma = fit_gaussian(ens)
            yield SummaryRow(w, pol, mu, sigma, n_trials, x0), ens


def position_sweep(params: LlgParams, x0_fracs, width: float, n_trials: int, seed: int,
                   polarities=(1, -1), current_density: float = 1.0e12):
    """Fixed-width characterisation over initial positions (fractions of L_dw)."""
    for pol in polarities:
        s = polarity_seed(seed, pol)
        for f in x0_fracs:
            x0 = float(f) * params.L_dw
            ens = run_trials(x0, PulseSpec(width, pol, current_density), n_trials, params, s)
            mu, sigma = fit_gaussian(ens)
            yield SummaryRow(width, pol, mu, sigma, n_trials, x0), ens
