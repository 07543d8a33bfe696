"""Device-level probabilistic models.

* :class:`CalibrationTable` maps pulse width to the mean and variance of the
  conductance change of a domain-wall device (normalised weight units).
* :func:`sigma_min_for_bits` converts bits of update precision into the
  narrowest programmable Gaussian.
* :class:`FilamentaryModel` is the current-programmed filamentary baseline whose
  mean and spread are coupled through the programming current.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import NonMonotoneCalibration

log = logging.getLogger(__name__)

TABLE = "table-interpolated"
LINEAR = "linear-analytic"

# +-3 sigma span equals one precision step; change to 3.0 for the half-span reading
DEFAULT_SIGMA_DIVISOR = 6.0
FLOAT_BITS = 32


def sigma_min_for_bits(bits: int, divisor: float = DEFAULT_SIGMA_DIVISOR,
                       range_width: float = 2.0) -> float:
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    return (range_width / 2.0 ** bits) / divisor


@dataclass(frozen=True)
class PrecisionSpec:
    bits: int
    weight_range: tuple[float, float] = (-1.0, 1.0)
    divisor: float = DEFAULT_SIGMA_DIVISOR

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError(f"bits must be >= 1, got {self.bits}")

    @property
    def is_float(self) -> bool:
        return self.bits >= FLOAT_BITS

    @property
    def sigma_min(self) -> float:
        lo, hi = self.weight_range
        return sigma_min_for_bits(self.bits, self.divisor, hi - lo)


def _strictly_increasing(a: np.ndarray) -> bool:
    return bool(np.all(np.diff(a) > 0))


@dataclass(frozen=True)
class CalibrationTable:
    """Monotone pulse-width -> (mean, variance) map with inverses.

    Widths are in seconds. In ``table-interpolated`` mode the map is piecewise
    linear through the stored knots plus the origin, continued linearly past
    the last knot. In ``linear-analytic`` mode it is exactly ``dmu = v T``,
    ``dvar = D T`` with slopes taken from the knots.
    """

    T: np.ndarray
    dmu: np.ndarray
    dvar: np.ndarray
    T_min: float = 0.0
    fit_mode: str = TABLE
    scale: float = 1.0

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        dmu = np.asarray(self.dmu, dtype=float)
        dvar = np.asarray(self.dvar, dtype=float)
        if not (T.shape == dmu.shape == dvar.shape) or T.ndim != 1:
            raise ValueError("T, dmu and dvar must be 1-D arrays of equal length")
        if len(T) < 1 or (self.fit_mode == TABLE and len(T) < 2):
            raise NonMonotoneCalibration("calibration needs at least two entries")
        if self.fit_mode not in (TABLE, LINEAR):
            raise ValueError(f"unknown fit_mode {self.fit_mode!r}")
        if np.any(T <= 0) or not _strictly_increasing(T):
            raise NonMonotoneCalibration("pulse widths must be positive and strictly increasing")
        if np.any(dmu <= 0) or not _strictly_increasing(dmu):
            raise NonMonotoneCalibration("mean change must be strictly increasing in T")
        if np.any(dvar < 0) or (np.any(dvar > 0) and not _strictly_increasing(dvar)):
            raise NonMonotoneCalibration("variance must be strictly increasing in T")
        if self.T_min < 0:
            raise ValueError("T_min must be >= 0")
        for name, arr in (("T", T), ("dmu", dmu), ("dvar", dvar)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        # knots including the origin
        object.__setattr__(self, "_kT", np.concatenate([[0.0], T]))
        object.__setattr__(self, "_kmu", np.concatenate([[0.0], dmu]))
        object.__setattr__(self, "_kvar", np.concatenate([[0.0], dvar]))

    # -- constructors -------------------------------------------------------

    @classmethod
    def linear(cls, v: float, D: float, T_min: float = 0.0, T_max: float = 50e-9,
               n: int = 10, scale: float = 1.0) -> "CalibrationTable":
        """Analytic table with slopes ``v`` (units/s) and ``D`` (units^2/s)."""
        T = np.linspace(T_max / n, T_max, n)
        return cls(T, v * T, D * T, T_min=T_min, fit_mode=LINEAR, scale=scale)

    @property
    def is_linear(self) -> bool:
        return self.fit_mode == LINEAR

    @property
    def v(self) -> float:
        return float(self.dmu[-1] / self.T[-1])

    @property
    def D(self) -> float:
        return float(self.dvar[-1] / self.T[-1])

    @property
    def noiseless(self) -> bool:
        return not np.any(self.dvar > 0)

    def with_T_min(self, T_min: float) -> "CalibrationTable":
        return replace(self, T_min=float(T_min))

    def with_precision(self, precision: PrecisionSpec | int) -> "CalibrationTable":
        """Copy whose T_min yields the narrowest Gaussian allowed by ``precision``."""
        if not isinstance(precision, PrecisionSpec):
            precision = PrecisionSpec(int(precision))
        if precision.is_float or self.noiseless:
            return self.with_T_min(0.0)
        return self.with_T_min(float(self._inverse(precision.sigma_min ** 2, self._kvar)))

    # -- forward maps -------------------------------------------------------

    def mean(self, T):
        """Mean conductance change for pulse width(s) ``T``."""
        return self._forward(T, self._kmu)

    def var(self, T):
        return self._forward(T, self._kvar)

    def _forward(self, T, ky):
        T = np.asarray(T, dtype=float)
        if self.is_linear:
            out = (ky[-1] / self._kT[-1]) * T
        else:
            out = np.interp(T, self._kT, ky)
            over = T > self._kT[-1]
            if np.any(over):
                slope = (ky[-1] - ky[-2]) / (self._kT[-1] - self._kT[-2])
                out = np.where(over, ky[-1] + slope * (T - self._kT[-1]), out)
                self._warn_extrapolation()
        return out if out.ndim else float(out)

    # -- inverse maps -------------------------------------------------------

    def _inverse(self, y, ky):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("target must be >= 0")
        if self.is_linear:
            slope = ky[-1] / self._kT[-1]
            out = y / slope if slope > 0 else np.zeros_like(y)
        else:
            out = np.interp(y, ky, self._kT)
            over = y > ky[-1]
            if np.any(over):
                slope = (ky[-1] - ky[-2]) / (self._kT[-1] - self._kT[-2])
                out = np.where(over, self._kT[-1] + (y - ky[-1]) / slope, out)
                self._warn_extrapolation()
        return out

    def _warn_extrapolation(self):
        if not self.__dict__.get("_warned"):
            log.warning("calibration queried beyond %.3g s; extrapolating the last segment",
                        self.T[-1])
            object.__setattr__(self, "_warned", True)

    def mean_to_width(self, target):
        """Width ``T >= 0`` with ``mean(T) == target``."""
        out = self._inverse(target, self._kmu)
        return out if out.ndim else float(out)

    def var_to_width(self, target):
        """Width with ``var(T) == target``, clamped below at ``T_min``."""
        if self.noiseless:
            out = np.full(np.shape(target), self.T_min)
        else:
            out = np.maximum(self._inverse(target, self._kvar), self.T_min)
        return out if np.ndim(out) else float(out)

    def var_to_width_unclamped(self, target):
        out = self._inverse(target, self._kvar)
        return out if out.ndim else float(out)

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write ``T_ns,dmu,dvar`` CSV plus a JSON sidecar next to it."""
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("T_ns,dmu,dvar\n")
            for t, m, v in zip(self.T, self.dmu, self.dvar):
                fh.write(f"{float(t) * 1e9!r},{float(m)!r},{float(v)!r}\n")
        meta = {"T_min_ns": self.T_min * 1e9, "scale": self.scale, "fit_mode": self.fit_mode}
        sidecar(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationTable":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(sidecar(path).read_text(encoding="utf-8"))
        return cls(data[:, 0] * 1e-9, data[:, 1], data[:, 2],
                   T_min=float(meta.get("T_min_ns", 0.0)) * 1e-9,
                   fit_mode=meta.get("fit_mode", TABLE),
                   scale=float(meta.get("scale", 1.0)))


# slopes fitted to the default domain-wall track (weight units per second of pulse)
DEFAULT_V = 8.45e6
DEFAULT_D = 1.9e4


def default_table(T_max: float = 50e-9) -> CalibrationTable:
    """Linear stand-in for a characterisation of the default device."""
    return CalibrationTable.linear(DEFAULT_V, DEFAULT_D, T_max=T_max)


def sidecar(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def build_calibration(rows: Sequence, scale: float, fit_mode: str = TABLE,
                      T_min: float = 0.0) -> CalibrationTable:
    """Turn fitted position-change statistics into a calibration table.

    ``rows`` holds objects with ``pulse_width``, ``mu`` and ``sigma`` (metres),
    or plain ``(T, mu, sigma)`` tuples. Rows sharing a width (the two
    polarities) are merged by averaging ``|mu|`` and ``sigma^2``. ``scale``
    converts metres of wall travel into weight units.
    """
    by_T: dict[float, list[tuple[float, float]]] = {}
    for r in rows:
        T, mu, sigma = (r.pulse_width, r.mu, r.sigma) if hasattr(r, "pulse_width") else r
        by_T.setdefault(float(T), []).append((abs(mu), sigma ** 2))
    if len(by_T) < 2:
        raise NonMonotoneCalibration("calibration needs at least two pulse widths")
    T = np.array(sorted(by_T))
    mu = np.array([np.mean([m for m, _ in by_T[t]]) for t in T]) * scale
    var = np.array([np.mean([v for _, v in by_T[t]]) for t in T]) * scale ** 2
    if fit_mode == LINEAR:
        # least squares through the origin
        v = float(T @ mu / (T @ T))
        D = float(T @ var / (T @ T))
        return CalibrationTable(T, v * T, D * T, T_min=T_min, fit_mode=LINEAR, scale=scale)
    return CalibrationTable(T, mu, var, T_min=T_min, fit_mode=TABLE, scale=scale)


@dataclass(frozen=True)
class FilamentaryModel:
    """Current-programmed filamentary device (currents in uA, conductances in uS).

    The mean rises linearly from ``g_range[0]`` to ``g_range[1]`` over
    ``I_range`` while the spread falls linearly from ``sigma_low`` to
    ``sigma_high``. With the defaults ``3 sigma`` at the low end covers about
    half of the range while the highest-current filament is nearly
    deterministic.
    """

    I_range: tuple[float, float] = (20.0, 200.0)
    g_range: tuple[float, float] = (5.0, 105.0)
    sigma_low: float = 16.0
    sigma_high: float = 0.02

    def __post_init__(self):
        if not self.I_range[0] < self.I_range[1] or not self.g_range[0] < self.g_range[1]:
            raise ValueError("I_range and g_range must be increasing intervals")
        if self.sigma_low < 0 or self.sigma_high < 0:
            raise ValueError("spreads must be >= 0")

    def _frac(self, I):
        lo, hi = self.I_range
        return (np.asarray(I, dtype=float) - lo) / (hi - lo)

    def mu_of_I(self, I):
        lo, hi = self.g_range
        return lo + (hi - lo) * self._frac(I)

    def sigma_of_I(self, I):
        return self.sigma_low + (self.sigma_high - self.sigma_low) * self._frac(I)

    def current_for(self, g):
        """Programming current whose mean conductance is ``g``."""
        glo, ghi = self.g_range
        lo, hi = self.I_range
        f = np.clip((np.asarray(g, dtype=float) - glo) / (ghi - glo), 0.0, 1.0)
        return lo + (hi - lo) * f

    @property
    def coupled(self) -> bool:
        """True when larger currents give both higher mean and lower spread."""
        return self.sigma_low > self.sigma_high

    @property
    def span(self) -> float:
        return self.g_range[1] - self.g_range[0]


def filamentary_program(target_level, model: FilamentaryModel, rng: np.random.Generator):
    """Program at current(s) ``target_level``; returns clamped conductance draw(s)."""
    I = np.asarray(target_level, dtype=float)
    lo, hi = model.I_range
    if np.any(I < lo - 1e-12) or np.any(I > hi + 1e-12):
        raise ValueError(f"programming current outside {model.I_range}")
    g = model.mu_of_I(I) + model.sigma_of_I(I) * rng.standard_normal(I.shape)
    g = np.clip(g, *model.g_range)
    return g if g.ndim else float(g)


def tmin_table(bits: Iterable[int], table: CalibrationTable,
               divisor: float = DEFAULT_SIGMA_DIVISOR) -> list[tuple[int, float, float]]:
    """``(bits, sigma_min, T_min)`` for each precision, handy for reports."""
    out = []
    for b in bits:
        spec = PrecisionSpec(int(b), divisor=divisor)
        t = table.with_precision(spec).T_min
        out.append((int(b), spec.sigma_min if not spec.is_float else 0.0, t))
    return out

