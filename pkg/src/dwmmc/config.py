"""Flat ``section.key = value`` run configuration.

Sections: ``llg`` (fields of :class:`~dwmmc.llg.LlgParams`), ``train`` (fields of
:class:`~dwmmc.samplers.TrainConfig`), ``char`` (characterisation sweep),
``calib`` (calibration table), ``data`` (desk dataset) and ``sweep``.
Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .llg import LlgParams
from .samplers.langevin import TrainConfig


def _num(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _list(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    if isinstance(v, str):
        return [_num(p) for p in v.replace(",", " ").split() if p]
    return [v]


def parse_text(text: str, source: str = "<config>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"{source}:{lineno}: key {key!r} needs a section prefix")
        out[key] = _num(val)
    return out


def load(path: str | Path) -> dict[str, object]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_text(text, str(p))


@dataclass
class CharSettings:
    widths_ns: list = field(default_factory=lambda: [5, 10, 15, 20, 25, 30, 35, 40, 45, 50])
    n_trials: int = 500
    position_width_ns: float = 5.0
    position_trials: int = 100
    position_fracs: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                                          0.6, 0.7, 0.8, 0.9, 1.0])
    # start the + sweep near one end and the - sweep near the other so walls
    # have room to travel for the longest pulse
    x0_plus_frac: float = 0.1
    x0_minus_frac: float = 0.9
    current_density: float = 1.0e12
    hist_bins: int = 30


@dataclass
class CalibSettings:
    path: str = ""
    fit_mode: str = "analytic"
    divisor: float = 6.0


@dataclass
class DataSettings:
    kind: str = "patterns"
    n_train_per_class: int = 100
    n_test_per_class: int = 50
    n_classes: int = 10
    size: int = 8
    noise: float = 1.0
    spread: float = 0.3
    arch: str = "tiny_resnet"
    hidden: int = 32
    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""
    limit: int = 0


@dataclass
class SweepSettings:
    bits: list = field(default_factory=lambda: [10, 9, 8, 7, 6, 5, 4])
    samplers: list = field(default_factory=lambda: ["sgld", "dwsgd"])
    include_float: bool = False
    workers: int = 1


_LIST_FIELDS = {"char.widths_ns", "char.position_fracs", "sweep.bits", "sweep.samplers"}


def _fill(cls, section: str, values: dict, base=None):
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for key, val in values.items():
        sec, _, name = key.partition(".")
        if sec != section:
            continue
        if name not in known:
            raise ConfigError(f"unknown key {key!r}")
        kw[name] = _list(val) if key in _LIST_FIELDS else val
    try:
        if base is None:
            return cls(**kw)
        return base.with_(**kw) if hasattr(base, "with_") else base.replace(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


@dataclass
class RunConfig:
    llg: LlgParams = field(default_factory=LlgParams)
    train: TrainConfig = field(default_factory=TrainConfig.desk)
    char: CharSettings = field(default_factory=CharSettings)
    calib: CalibSettings = field(default_factory=CalibSettings)
    data: DataSettings = field(default_factory=DataSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)

    SECTIONS = ("llg", "train", "char", "calib", "data", "sweep")

    @classmethod
    def from_values(cls, values: dict, preset: str = "desk") -> "RunConfig":
        for key in values:
            if key.partition(".")[0] not in cls.SECTIONS:
                raise ConfigError(f"unknown section in key {key!r}")
        if preset not in ("desk", "full"):
            raise ConfigError(f"unknown preset {preset!r}")
        base_train = TrainConfig.desk() if preset == "desk" else TrainConfig.full()
        return cls(
            llg=_fill(LlgParams, "llg", values, LlgParams()),
            train=_fill(TrainConfig, "train", values, base_train),
            char=_fill(CharSettings, "char", values),
            calib=_fill(CalibSettings, "calib", values),
            data=_fill(DataSettings, "data", values),
            sweep=_fill(SweepSettings, "sweep", values),
        )

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None,
             preset: str | None = None) -> "RunConfig":
        values = load(path) if path else {}
        values.update(overrides or {})
        preset = preset or str(values.pop("run.preset", "desk"))
        return cls.from_values(values, preset)

    def snapshot(self) -> dict:
        out = {}
        for sec in self.SECTIONS:
            obj = getattr(self, sec)
            for f in fields(obj):
                out[f"{sec}.{f.name}"] = getattr(obj, f.name)
        return out

    def dumps(self) -> str:
        lines = []
        for key, val in self.snapshot().items():
            if isinstance(val, list):
                val = ",".join(str(v) for v in val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), indent=2, sort_keys=True)
