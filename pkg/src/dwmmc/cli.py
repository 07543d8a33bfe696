"""Command-line driver: ``characterize``, ``calibrate``, ``train`` and ``sweep``.

Every run writes CSV files, figures (unless ``--no-plots``) and a single
``manifest.json`` into its output directory. Exit codes: 0 success, 2 bad
configuration or input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, data, devices, llg
from .config import RunConfig, parse_text
from .errors import ConfigError, DwmmcError, InsufficientTrials, NumericalError
from .nn import layers
from .samplers import SAMPLE_COUNTS, Trainer, write_config

log = logging.getLogger("dwmmc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

RAW_HEADER = ["pulse_width_ns", "polarity", "x0_frac", "trial", "delta_x_m"]
SUMMARY_HEADER = ["pulse_width_ns", "polarity", "mu_m", "sigma_m", "n_trials"]
POSITION_HEADER = ["x0_frac", "polarity", "mu_m", "sigma_m", "n_trials"]
SWEEP_HEADER = ["bits", "sampler", "n_samples", "accuracy"]
MANIFEST = "manifest.json"


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(out: Path, subcommand: str, cfg: RunConfig, seed: int, started: float,
                   argv, files) -> Path:
    manifest = {
        "subcommand": subcommand,
        "seed": seed,
        "config": cfg.snapshot(),
        "git_describe": git_describe(),
        "version": __version__,
        "output_dir": str(out),
        "argv": list(argv),
        "outputs": sorted(str(Path(f).relative_to(out)) for f in files),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_unix": started,
        "wall_seconds": round(time.time() - started, 3),
    }
    p = out / MANIFEST
    p.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                 encoding="utf-8")
    return p


def _csv(path: Path, header, rows) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _f(x: float) -> str:
    return repr(float(x))


def _ns(T: float) -> str:
    return f"{T * 1e9:.6g}"


# -- characterize -------------------------------------------------------------

def _hist_dat(path: Path, deltas, bins: int) -> Path:
    counts, edges = np.histogram(np.asarray(deltas) * 1e9, bins=bins)
    centres = 0.5 * (edges[1:] + edges[:-1])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# bin_centre_nm count\n")
        for c, n in zip(centres, counts):
            fh.write(f"{c!r} {int(n)}\n")
    return path


def characterize(cfg: RunConfig, seed: int, out: Path, plots: bool = True) -> list[Path]:
    P, ch = cfg.llg, cfg.char
    if ch.n_trials < 2 or ch.position_trials < 2:
        raise InsufficientTrials("characterisation needs at least 2 trials per condition")
    widths = [float(w) * 1e-9 for w in ch.widths_ns]
    files, raw, summary, ens_all = [], [], [], []
    for pol, frac in ((1, ch.x0_plus_frac), (-1, ch.x0_minus_frac)):
        for row, ens in llg.width_sweep(P, widths, ch.n_trials, seed, polarities=(pol,),
                                        x0=frac * P.L_dw, current_density=ch.current_density):
            summary.append(row)
            ens_all.append(ens)
            raw.extend([_ns(row.pulse_width), pol, _f(frac), i, _f(d)]
                       for i, d in enumerate(ens.deltas))
    files.append(_csv(out / "characterize_raw.csv", RAW_HEADER, raw))
    files.append(_csv(out / "characterize_summary.csv", SUMMARY_HEADER,
                      [[_ns(r.pulse_width), r.polarity, _f(r.mu), _f(r.sigma), r.n_trials]
                       for r in summary]))
    hdir = out / "histograms"
    hdir.mkdir(exist_ok=True)
    for r, e in zip(summary, ens_all):
        tag = "pos" if r.polarity > 0 else "neg"
        files.append(_hist_dat(hdir / f"hist_T{_ns(r.pulse_width)}ns_{tag}.dat", e.deltas,
                               ch.hist_bins))

    pos_rows, pos_raw = [], []
    for row, ens in llg.position_sweep(P, ch.position_fracs, ch.position_width_ns * 1e-9,
                                       ch.position_trials, seed,
                                       current_density=ch.current_density):
        pos_rows.append(row)
        frac = row.x0 / P.L_dw
        pos_raw.extend([_ns(row.pulse_width), row.polarity, _f(frac), i, _f(d)]
                       for i, d in enumerate(ens.deltas))
    files.append(_csv(out / "position_raw.csv", RAW_HEADER, pos_raw))
    files.append(_csv(out / "position_summary.csv", POSITION_HEADER,
                      [[_f(r.x0 / P.L_dw), r.polarity, _f(r.mu), _f(r.sigma), r.n_trials]
                       for r in pos_rows]))
    if plots:
        from . import plots as pl
        files.append(pl.moments_vs_width(summary, out / "moments_vs_width.png"))
        files.append(pl.histograms([(_ns(r.pulse_width), e.deltas, r.polarity)
                                    for r, e in zip(summary, ens_all)],
                                   out / "histograms.png", ch.hist_bins))
        files.append(pl.position_dependence(pos_rows, P.L_dw, out / "position_dependence.png"))
    return files


# -- calibrate ----------------------------------------------------------------

def read_summary(path: Path) -> list[llg.SummaryRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows.append(llg.SummaryRow(float(r["pulse_width_ns"]) * 1e-9, int(r["polarity"]),
                                       float(r["mu_m"]), float(r["sigma_m"]), int(r["n_trials"])))
    return rows


def _fit_mode(name: str) -> str:
    modes = {"analytic": devices.LINEAR, "linear": devices.LINEAR,
             "table": devices.TABLE, devices.LINEAR: devices.LINEAR, devices.TABLE: devices.TABLE}
    if name not in modes:
        raise ConfigError(f"calib.fit_mode must be one of {sorted(modes)}")
    return modes[name]


def calibrate(cfg: RunConfig, seed: int, out: Path, summary_path: Path | None = None,
              plots: bool = True) -> list[Path]:
    P, ch = cfg.llg, cfg.char
    if summary_path is not None:
        rows = read_summary(summary_path)
    else:
        widths = [float(w) * 1e-9 for w in ch.widths_ns]
        rows = []
        for pol, frac in ((1, ch.x0_plus_frac), (-1, ch.x0_minus_frac)):
            rows += [r for r, _ in llg.width_sweep(P, widths, ch.n_trials, seed, (pol,),
                                                   frac * P.L_dw, ch.current_density)]
    table = devices.build_calibration(rows, 1.0 / P.L_dw, _fit_mode(cfg.calib.fit_mode))
    path = out / "calibration.csv"
    table.save(path)
    bits = list(range(1, 17))
    tm = devices.tmin_table(bits, table, cfg.calib.divisor)
    files = [path, devices.sidecar(path),
             _csv(out / "tmin.csv", ["bits", "sigma_min", "T_min_ns"],
                  [[b, _f(s), _f(t * 1e9)] for b, s, t in tm])]
    if plots:
        from . import plots as pl
        files.append(pl.calibration(table, out / "calibration.png"))
    return files


# -- train / sweep --------------------------------------------------------------

def build_data(cfg: RunConfig, seed: int):
    d = cfg.data
    if d.kind == "patterns":
        tr = data.gen_patterns(d.n_train_per_class, d.n_classes, d.size, 1, d.noise, seed=seed)
        te = data.gen_patterns(d.n_test_per_class, d.n_classes, d.size, 1, d.noise, seed=seed,
                               split=data.TEST)
    elif d.kind == "gaussians":
        tr = data.gen_gaussians(d.n_train_per_class, d.n_classes, d.spread, seed)
        te = data.gen_gaussians(d.n_test_per_class, d.n_classes, d.spread, seed,
                                split=data.TEST, offset=1)
    elif d.kind == "idx":
        lim = d.limit or None
        tr = data.load_idx(d.idx_train_images, d.idx_train_labels, limit=lim)
        te = data.load_idx(d.idx_test_images, d.idx_test_labels, tr.n_classes, limit=lim,
                           split=data.TEST)
    else:
        raise ConfigError(f"data.kind must be patterns, gaussians or idx, got {d.kind!r}")
    mean, std = data.channel_stats(tr)
    return data.normalize(tr, mean, std), data.normalize(te, mean, std)


def build_net(cfg: RunConfig, train: data.Dataset, seed: int) -> layers.Network:
    d = cfg.data
    if d.arch == "tiny_resnet":
        if train.inputs.ndim != 4:
            raise ConfigError("tiny_resnet needs image data")
        _, c, h, _ = train.inputs.shape
        net = layers.tiny_resnet(c, train.n_classes, h, seed=seed)
    elif d.arch == "mlp":
        x = train.inputs.reshape(len(train), -1)
        net = layers.mlp(x.shape[1], d.hidden, train.n_classes, seed=seed)
    else:
        raise ConfigError(f"data.arch must be tiny_resnet or mlp, got {d.arch!r}")
    return net.astype(np.float32)


def _flat_if_mlp(cfg, ds):
    if cfg.data.arch != "mlp":
        return ds
    return data.Dataset(ds.inputs.reshape(len(ds), -1), ds.labels, ds.n_classes, ds.split)


def load_table(cfg: RunConfig) -> devices.CalibrationTable:
    if cfg.calib.path:
        p = Path(cfg.calib.path)
        if not p.exists():
            raise ConfigError(f"calibration file {p} not found")
        return devices.CalibrationTable.load(p)
    return devices.default_table()


def train_cell(cfg: RunConfig, seed: int, out: Path | None = None):
    """One training run; returns the :class:`TrainResult`."""
    tr, te = build_data(cfg, seed)
    tr, te = _flat_if_mlp(cfg, tr), _flat_if_mlp(cfg, te)
    net = build_net(cfg, tr, seed)
    tc = cfg.train.with_(seed=seed)
    table = load_table(cfg)
    trainer = Trainer(net, tr, te, tc, table=table,
                      log_path=(out / "train_log.csv") if out is not None else None)
    res = trainer.run()
    return res, net


def train(cfg: RunConfig, seed: int, out: Path, plots: bool = True) -> list[Path]:
    res, net = train_cell(cfg, seed, out)
    files = [out / "train_log.csv"]
    cfg_path = out / "train_config.json"
    write_config(cfg_path, res.config, arch=net.arch_id, n_analog=net.n_analog,
                 calibration=cfg.calib.path or "analytic-default")
    files.append(cfg_path)
    files += res.store.save(out / "posterior", net)
    rows = [[k, _f(a)] for k, a in sorted(res.accuracy.items())]
    rows.append(["last", _f(res.last_accuracy)])
    files.append(_csv(out / "accuracy.csv", ["n_samples", "accuracy"], rows))
    if plots and res.rows:
        from . import plots as pl
        files.append(pl.training_curves(res.rows, out / "training_curves.png"))
    for k, a in sorted(res.accuracy.items()):
        print(f"{res.config.sampler} bits={res.config.bits} samples={k}: accuracy {a:.4f}")
    if res.acceptance is not None:
        print(f"acceptance rate {res.acceptance:.4f}")
    return files


def _sweep_cell(args):
    cfg, seed, bits, sampler = args
    c = replace(cfg, train=cfg.train.with_(bits=bits, sampler=sampler))
    res, _ = train_cell(c, seed)
    return bits, sampler, res.accuracy, res.last_accuracy


def sweep_rows(cfg: RunConfig, seed: int, workers: int = 1):
    bits = [int(b) for b in cfg.sweep.bits]
    if not bits:
        raise ConfigError("sweep.bits must not be empty")
    samplers = [str(s) for s in cfg.sweep.samplers]
    cells = [(cfg, seed, b, s) for b in bits for s in samplers]
    if cfg.sweep.include_float:
        cells = [(cfg, seed, devices.FLOAT_BITS, "sgld")] + cells
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows = []
    for b, s, acc, last in results:
        for k in SAMPLE_COUNTS:
            rows.append((b, s, k, acc.get(k, float("nan"))))
    return rows


def sgld_trend_ok(rows, knee: int = 7) -> bool:
    """SGLD 64-sample accuracy is non-increasing as precision drops below ``knee`` bits."""
    pts = sorted((b, a) for b, s, k, a in rows if s == "sgld" and k == 64 and b <= knee)
    accs = [a for _, a in pts]
    return all(x <= y for x, y in zip(accs, accs[1:]))


def sweep(cfg: RunConfig, seed: int, out: Path, plots: bool = True,
          workers: int = 1) -> list[Path]:
    rows = sweep_rows(cfg, seed, workers)
    path = _csv(out / "sweep.csv", SWEEP_HEADER, [[b, s, k, _f(a)] for b, s, k, a in rows])
    files = [path]
    print(f"sgld trend below the knee non-increasing: {sgld_trend_ok(rows)}")
    if plots:
        from . import plots as pl
        files.append(pl.accuracy_vs_bits(rows, out / "accuracy_vs_bits.png"))
    return files


# -- entry point ----------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="run seed (default: train.seed, 0)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--preset", choices=("desk", "full"), help="training preset")
    common.add_argument("--no-plots", action="store_true", help="skip figure output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dwmmc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("characterize", parents=[common], help="domain-wall pulse sweeps")
    c.add_argument("--trials", type=int, help="trials per pulse-width condition")
    k = sub.add_parser("calibrate", parents=[common], help="build a calibration table")
    k.add_argument("--from", dest="summary", help="characterize_summary.csv to fit")
    k.add_argument("--fit-mode", choices=("analytic", "table"))
    for name in ("train", "sweep"):
        t = sub.add_parser(name, parents=[common], help=f"{name} on the desk task")
        t.add_argument("--sampler", choices=("sgld", "dwsgd", "mh-filamentary"))
        t.add_argument("--bits", help="update precision (sweep: comma-separated list)")
        t.add_argument("--slots", type=int, help="posterior store capacity")
        t.add_argument("--calibration", help="calibration CSV (default: analytic table)")
        if name == "sweep":
            t.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    return p


def _overrides(args) -> dict:
    ov = parse_text("\n".join(args.set), "--set") if args.set else {}
    if args.seed is not None:
        ov["train.seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        ov["char.n_trials"] = args.trials
    if getattr(args, "fit_mode", None):
        ov["calib.fit_mode"] = args.fit_mode
    if getattr(args, "sampler", None):
        ov["train.sampler"] = args.sampler
        ov["sweep.samplers"] = args.sampler
    if getattr(args, "bits", None):
        if args.command == "train":
            try:
                ov["train.bits"] = int(args.bits)
            except ValueError as exc:
                raise ConfigError(f"--bits must be an integer, got {args.bits!r}") from exc
        else:
            ov["sweep.bits"] = args.bits
    if getattr(args, "slots", None) is not None:
        ov["train.n_slots"] = args.slots
    if getattr(args, "calibration", None):
        ov["calib.path"] = args.calibration
    return ov


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        cfg = RunConfig.load(args.config, _overrides(args), args.preset)
        seed = cfg.train.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        plots = not args.no_plots
        if args.command == "characterize":
            files = characterize(cfg, seed, out, plots)
        elif args.command == "calibrate":
            files = calibrate(cfg, seed, out, Path(args.summary) if args.summary else None,
                              plots)
        elif args.command == "train":
            files = train(cfg, seed, out, plots)
        else:
            files = sweep(cfg, seed, out, plots, args.workers)
        write_manifest(out, args.command, cfg, seed, started, argv, files)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DwmmcError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
