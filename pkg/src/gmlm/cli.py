"""Command-line interface: ``gmlm simulate | fit | reduce | bench``.

Every command writes into the ``--out`` directory and leaves a single
``manifest.json`` there recording the command, its flags, the seed, the
files read and written, the library version and the wall-clock time.

Randomness comes from ``--seed`` alone: ``simulate`` passes it to the
setting generator, ``fit`` seeds the Monte-Carlo moments with it and
``bench grid`` derives one stream per (setting, n, replication) from it.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, experiments, ising, normal
from .core import (Dataset, DegenerateFitError, GmlmParams, monomial_design, scalar_design,
                   sufficient_reduction, trig_design)
from .io import FormatError, load_dataset, load_tensor, save_dataset, save_tensor

log = logging.getLogger("gmlm")


class UsageError(ValueError):
    pass


def _write_manifest(out: Path, args, inputs, outputs, started):
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(p) for p in outputs),
        "version": __version__,
        "wall_clock_seconds": time.perf_counter() - started,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def parse_design(value, y, order):
    """Design tensors from a flag value.

    ``scalar`` gives ``F_y = y`` of shape ``1 x ... x 1``, ``monomial:2x2``
    the monomial design of the given dims, ``trig2x2`` the 2 x 2 rotation
    design; anything else is read as a GTDS1 file.
    """
    if value in ("scalar", "monomial", "trig2x2") or value.startswith("monomial:"):
        if y is None:
            raise UsageError(f"design {value!r} needs the response (--y)")
        if value == "scalar":
            return scalar_design(y, order)
        if value == "trig2x2":
            if order != 2:
                raise UsageError("trig2x2 design needs matrix-valued predictors")
            return trig_design(y)
        try:
            dims = tuple(int(d) for d in value.split(":", 1)[1].split("x"))
        except (IndexError, ValueError):
            raise UsageError(f"bad monomial design {value!r}; expected monomial:AxB...") from None
        if len(dims) != order:
            raise UsageError(f"design {value!r} has order {len(dims)} but predictors order {order}")
        return monomial_design(y, dims)
    path = Path(value)
    if not path.exists():
        raise UsageError(f"design file {value} does not exist")
    return load_dataset(path)


def cmd_simulate(args):
    started = time.perf_counter()
    out = _out_dir(args.out)
    data, b = experiments.generate(args.setting, args.n, args.seed)
    files = {"X.gtds": data.X, "F.gtds": data.F}
    for name, arr in files.items():
        save_dataset(out / name, arr)
    save_tensor(out / "y.gten", data.y)
    save_tensor(out / "B.gten", b)
    _write_manifest(out, args, [], [out / n for n in list(files) + ["y.gten", "B.gten"]], started)


def _save_params(out, params: GmlmParams, x_mean):
    written = []
    for k, (b, o) in enumerate(zip(params.betas, params.omegas), start=1):
        save_tensor(out / f"beta_{k}.gten", b)
        save_tensor(out / f"omega_{k}.gten", o)
        written += [out / f"beta_{k}.gten", out / f"omega_{k}.gten"]
    save_tensor(out / "eta_bar.gten", params.eta_bar)
    save_tensor(out / "x_mean.gten", x_mean)
    return written + [out / "eta_bar.gten", out / "x_mean.gten"]


def load_params(path) -> GmlmParams:
    """Read the ``beta_k`` / ``omega_k`` / ``eta_bar`` files written by ``fit``."""
    path = Path(path)
    betas, omegas = [], []
    k = 1
    while (path / f"beta_{k}.gten").exists():
        betas.append(np.atleast_2d(load_tensor(path / f"beta_{k}.gten")))
        omegas.append(np.atleast_2d(load_tensor(path / f"omega_{k}.gten")))
        k += 1
    if not betas:
        raise UsageError(f"no parameter files in {path}")
    eta_file = path / "eta_bar.gten"
    dims = tuple(b.shape[0] for b in betas)
    eta = load_tensor(eta_file).reshape(dims, order="F") if eta_file.exists() else np.zeros(dims)
    return GmlmParams(eta, betas, omegas)


def cmd_fit(args):
    started = time.perf_counter()
    x = load_dataset(args.data)
    y = load_tensor(args.y).reshape(-1) if args.y else None
    f = parse_design(args.design, y, x.ndim - 1)
    if f.shape[0] != x.shape[0]:
        raise UsageError(f"{f.shape[0]} design tensors for {x.shape[0]} observations")
    data = Dataset(x, f, y)
    out = _out_dir(args.out)
    if args.family == "normal":
        cfg = normal.NormalFitConfig(max_iter=args.max_iter if args.max_iter is not None else 100,
                                     rel_tol=args.tol if args.tol is not None else 1e-6)
        res = normal.fit(data, cfg)
        x_mean = res.x_mean
        trace_name = "log_likelihood"
    else:
        kw = {"seed": args.seed, "mc_samples": args.mc_samples}
        if args.max_iter is not None:
            kw["max_iter"] = args.max_iter
        if args.tol is not None:
            kw["grad_tol"] = args.tol
        res = ising.fit(data, ising.IsingFitConfig(**kw))
        x_mean = data.X.mean(axis=0)
        trace_name = "gradient_norm"
    written = _save_params(out, res.params, x_mean)
    with open(out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("iteration", trace_name))
        for i, v in enumerate(res.trace):
            w.writerow((i, repr(float(v))))
    log.info("%s fit: %d iterations, converged=%s", args.family, res.iterations, res.converged)
    inputs = [args.data] + ([args.y] if args.y else [])
    _write_manifest(out, args, inputs, written + [out / "trace.csv"], started)


def cmd_reduce(args):
    started = time.perf_counter()
    params = load_params(args.params)
    x = load_dataset(args.data)
    mean_file = Path(args.params) / "x_mean.gten"
    mean = load_tensor(mean_file).reshape(params.dims, order="F") if mean_file.exists() \
        else x.mean(axis=0)
    if x.shape[1:] != params.dims:
        raise UsageError(f"data dims {x.shape[1:]} do not match parameter dims {params.dims}")
    out = _out_dir(args.out)
    save_dataset(out / "reduced.gtds", sufficient_reduction(params, x, mean))
    _write_manifest(out, args, [args.params, args.data], [out / "reduced.gtds"], started)


def cmd_bench(args):
    started = time.perf_counter()
    out = _out_dir(args.out)
    if args.kind == "moments":
        p_grid = [int(p) for p in args.p_grid.split(",")]
        rows = experiments.moment_bench(p_grid, args.mc_samples, seed=args.seed)
        target = out / "moments.csv"
        experiments.write_bench_csv(rows, target)
    else:
        settings = [experiments.get_setting(s).id for s in args.setting.split(",")]
        n_grid = [int(n) for n in args.n.split(",")] if args.n else list(experiments.N_GRID)
        icfg = ising.IsingFitConfig(mc_samples=args.mc_samples,
                                    **({"max_iter": args.max_iter} if args.max_iter else {}))
        ncfg = normal.NormalFitConfig(**({"max_iter": args.max_iter} if args.max_iter else {}))
        rows = experiments.run_grid(settings, n_grid, args.reps, args.seed,
                                    workers=args.threads, normal_config=ncfg, ising_config=icfg)
        target = out / "grid.csv"
        experiments.write_csv(rows, target)
    _write_manifest(out, args, [], [target], started)


def build_parser():
    parser = argparse.ArgumentParser(prog="gmlm", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset from a simulation setting")
    p.add_argument("--setting", required=True, choices=experiments.SETTING_IDS)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a GMLM and write its parameters")
    p.add_argument("--family", choices=("normal", "ising"), default="normal")
    p.add_argument("--data", required=True, help="GTDS1 file of predictor tensors")
    p.add_argument("--y", help="GTEN1 file with the responses")
    p.add_argument("--design", default="scalar",
                   help="scalar, monomial:AxB..., trig2x2 or a GTDS1 file of design tensors")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float, help="relative likelihood change (normal) or gradient norm (ising)")
    p.add_argument("--mc-samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reduce", help="apply a fitted reduction to a dataset")
    p.add_argument("--params", required=True, help="output directory of a fit")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("bench", help="moment timing or simulation grid")
    p.add_argument("--kind", choices=("moments", "grid"), required=True)
    p.add_argument("--p-grid", default="2,4,6,8,10,12")
    p.add_argument("--setting", default="1a")
    p.add_argument("--n", help="comma separated sample sizes (grid)")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--mc-samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as err:
        parser.error(str(err))
    except (FormatError, DegenerateFitError, ValueError, OSError, np.linalg.LinAlgError) as err:
        print(f"gmlm {args.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
