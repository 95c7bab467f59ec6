"""Command-line front end: ``podgp <command> [options]``.

Every command writes its outputs plus a plain-text ``key = value`` run
manifest (resolved settings, package versions and SHA-256 of input files).
Settings may also come from an INI file given with ``--config``: keys in a
``[podgp]`` section apply to every command, keys in a section named after
the command apply to that command only, and flags on the command line win.
Keys are option names with dashes replaced by underscores.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .design import load_space, read_design_csv, scale_to_space, sobol_points, write_design_csv
from .exceptions import ConfigError, PodGpError, ShapeError
from .models import BUILTINS, Dataset, get_builtin, load_dataset
from .sensitivity import n_base_from_total, replicated_sobol
from .surrogate import PodGpSurrogate, load_model, read_model_header, save_model
from .uqstats import exceedance, histogram_density, kde_density, report_indices, summarize, write_summary_table
from .validation import cross_validate, pod_snapshot_sweep

log = logging.getLogger("podgp")

WORKERS_ENV = "PODGP_WORKERS"


def default_workers():
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV} must be positive, got {n}")
        return n
    return os.cpu_count() or 1


def _int_list(text):
    return [int(float(v)) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


# -- manifests -------------------------------------------------------------------


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    import scipy
    import sklearn

    return {
        "podgp": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_manifest(path, command, settings, inputs=()):
    lines = [f"command = {command}"]
    for key in sorted(settings):
        if key in ("func", "config"):
            continue
        lines.append(f"config.{key} = {settings[key]}")
    for name, ver in _versions().items():
        lines.append(f"version.{name} = {ver}")
    for p in inputs:
        lines.append(f"sha256.{p} = {_sha256(p)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _manifest_path(out, is_dir):
    out = Path(out)
    return out / "manifest.txt" if is_dir else out.with_name(out.name + ".manifest.txt")


# -- shared data plumbing ---------------------------------------------------------


def _space(args):
    return load_space(args.space) if args.space else None


def _load_training_data(args):
    """Dataset from CSV files or from a built-in model evaluated on Sobol' points."""
    if args.data_inputs or args.data_responses or args.time_grid:
        missing = [f for f, v in (("--data-inputs", args.data_inputs), ("--data-responses", args.data_responses),
                                  ("--time-grid", args.time_grid)) if not v]
        if missing:
            raise ConfigError(f"external data needs {', '.join(missing)} as well")
        notices = []
        ds = load_dataset(args.data_inputs, args.data_responses, args.time_grid, _space(args), notices)
        for n in notices:
            log.warning(n)
        return ds, [args.data_inputs, args.data_responses, args.time_grid]
    if not args.model:
        raise ConfigError("give either --data-inputs/--data-responses/--time-grid or --model <builtin>")
    model = get_builtin(args.model)
    n = args.n if args.n is not None else 256
    X = scale_to_space(sobol_points(model.dim, n, args.skip), model.space).points
    log.info("evaluating builtin %s on %d points", model.name, n)
    Y = model(X)
    t = model.time_grid if model.time_grid is not None else np.arange(Y.shape[1], dtype=float)
    return Dataset(X, Y, t, model.space, provenance=f"builtin {model.name} n={n} skip={args.skip}"), []


def _evaluator(args):
    """Callable model, its parameter space, time grid and provenance files."""
    if not args.model:
        raise ConfigError("--model is required (a model file or one of " + ", ".join(sorted(BUILTINS)) + ")")
    path = Path(args.model)
    if path.is_file():
        model = load_model(path)
        return model.predict, model.space_, model.time_grid_, [str(path)]
    if args.model in BUILTINS:
        b = get_builtin(args.model)
        t = b.time_grid if b.time_grid is not None else np.zeros(1)
        return b, b.space, t, []
    raise FileNotFoundError(f"model file not found and not a builtin model: {args.model}")


def _surrogate_params(args, space, time_grid):
    return {
        "space": space,
        "energy_threshold": args.energy_threshold,
        "n_snapshots": args.snapshots,
        "random_state": args.seed,
        "n_restarts": args.restarts,
        "time_grid": time_grid,
        "qoi": args.qoi or "",
    }


# -- commands ----------------------------------------------------------------------


def cmd_sample(args):
    space = load_space(args.space or "isr3d")
    n = 512 if args.n is None else args.n
    design = scale_to_space(sobol_points(space.dim, n, args.skip), space)
    out = Path(args.out or "design.csv")
    write_design_csv(design, out)
    write_manifest(_manifest_path(out, False), "sample", vars(args),
                   [args.space] if args.space and Path(args.space).is_file() else [])
    log.info("wrote %d x %d design to %s", len(design), space.dim, out)


def cmd_train(args):
    ds, inputs = _load_training_data(args)
    params = _surrogate_params(args, ds.space, ds.time_grid)
    params["n_jobs"] = args.workers
    log.info("training on %d runs x %d time steps", len(ds), ds.Y.shape[1])
    model = PodGpSurrogate(**params).fit(ds.X, ds.Y)
    out = Path(args.out or "model.podgp")
    save_model(model, out)
    write_manifest(_manifest_path(out, False), "train", vars(args), inputs)
    log.info("k = %d modes, energy %.8f; model written to %s", model.n_components_, model.basis_.energy_, out)


def cmd_cv(args):
    ds, inputs = _load_training_data(args)
    params = _surrogate_params(args, ds.space, ds.time_grid)
    log.info("%d-fold cross-validation x %d repetitions on %d runs", args.folds, args.reps, len(ds))
    report = cross_validate(ds.X, ds.Y, args.folds, args.reps, params, seed=args.seed, n_jobs=args.workers)
    out = Path(args.out or "cv")
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "cv_folds.csv")
    (out / "cv_report.txt").write_text(report.to_text())
    write_manifest(_manifest_path(out, True), "cv", vars(args), inputs)
    sys.stdout.write(report.to_text())


def cmd_pod_sweep(args):
    ds, inputs = _load_training_data(args)
    counts = _int_list(args.counts)
    res = pod_snapshot_sweep(ds.Y, counts, args.energy_threshold, args.reps, args.seed)
    out = Path(args.out or "pod_sweep.csv")
    res.to_csv(out)
    write_manifest(_manifest_path(out, False), "pod-sweep", vars(args), inputs)
    for c, m, s in zip(res.counts, res.mean, res.sd):
        log.info("snapshots %4d: e_POD %.3e +/- %.1e", c, m, s)


def cmd_predict(args):
    if not args.model or not args.data_inputs:
        raise ConfigError("predict needs --model <model file> and --data-inputs <inputs csv>")
    model = load_model(args.model)
    header = Path(args.data_inputs).read_text().splitlines()[:1]
    ncols = len(header[0].split(",")) if header else 0
    if ncols != model.space_.dim:
        raise ShapeError(f"inputs file has {ncols} columns but the model expects {model.space_.dim} "
                         f"({', '.join(model.space_.names)})")
    design, reordered = read_design_csv(args.data_inputs, model.space_)
    if reordered:
        log.warning("input columns reordered to match the model's parameter order")
    pred = model.predict_response(design.points)
    out = Path(args.out or "predictions.csv")
    with open(out, "w") as fh:
        fh.write(",".join(f"t={t:g}" for t in model.time_grid_) + "\n")
        for row in pred.mean:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    write_manifest(_manifest_path(out, False), "predict", vars(args), [args.model, args.data_inputs])
    log.info("wrote %d predictions to %s (%d outside the training box)", len(design), out,
             int(pred.extrapolated.sum()))


def cmd_uq(args):
    f, space, t, inputs = _evaluator(args)
    days = _float_list(args.report_days) if args.report_days else [float(v) for v in t]
    cols = report_indices(t, days)
    n = 100_000 if args.n is None else args.n
    if args.sampler == "sobol":
        X = scale_to_space(sobol_points(space.dim, n, args.skip), space).points
    else:
        rng = np.random.default_rng(args.seed)
        X = space.lower + rng.random((n, space.dim)) * (space.upper - space.lower)
    log.info("propagating %d samples", n)
    E = np.asarray(f(X), dtype=float).reshape(n, -1)
    summary = summarize(E, t)
    out = Path(args.out or "uq")
    out.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out / "uq_summary.csv")
    reports = []
    thresholds = args.threshold or []
    with open(out / "exceedance.csv", "w") as fh:
        fh.write("time,threshold,direction,fraction\n")
        for i, thr in enumerate(thresholds):
            rep = exceedance(E, X, thr, args.direction, t, space.names)
            reports.append(rep)
            for tj, frac in zip(t, rep.fraction):
                fh.write(f"{float(tj)!r},{thr!r},{args.direction},{float(frac)!r}\n")
            rep.samples_to_csv(out / f"exceedance_samples_{i + 1}.csv")
    for d, j in zip(days, cols):
        edges, dens = histogram_density(E[:, j], args.bins)
        with open(out / f"hist_t{d:g}.csv", "w") as fh:
            fh.write("bin_left,bin_right,density\n")
            for a, b, v in zip(edges[:-1], edges[1:], dens):
                fh.write(f"{float(a)!r},{float(b)!r},{float(v)!r}\n")
        with open(out / f"kde_t{d:g}.csv", "w") as fh:
            fh.write("x,density\n")
            if np.ptp(E[:, j]) > 0:
                for x, v in zip(*kde_density(E[:, j])):
                    fh.write(f"{float(x)!r},{float(v)!r}\n")
            else:
                log.warning("all samples equal at t=%g; density file left empty", d)
    table = write_summary_table(summary, days, reports, label=args.qoi or "QoI")
    (out / "uq_table.txt").write_text(table)
    write_manifest(_manifest_path(out, True), "uq", vars(args), inputs)
    sys.stdout.write(table)


def cmd_sa(args):
    f, space, t, inputs = _evaluator(args)
    if args.n_base is not None:
        n_base = args.n_base
    elif args.n is not None:
        n_base = n_base_from_total(args.n, space.dim)
    else:
        n_base = 2**14
    log.info("Saltelli design: n_base %d, %d replications, %d evaluations each", n_base, args.reps,
             n_base * (space.dim + 2))
    idx = replicated_sobol(f, space, n_base, args.reps, args.skip, n_jobs=args.workers, time_grid=t)
    out = Path(args.out or "sobol.csv")
    idx.to_csv(out)
    write_manifest(_manifest_path(out, False), "sa", dict(vars(args), n_base_resolved=n_base), inputs)
    last = idx.first_order.shape[1] - 1
    for i, name in enumerate(space.names):
        log.info("%-20s S=%.4f ST=%.4f (t=%g)", name, idx.first_order[i, last], idx.total[i, last], t[last])


def cmd_report(args):
    if not args.model:
        raise ConfigError("report needs --model <model file>")
    meta = read_model_header(args.model)
    lines = []
    for key in sorted(meta):
        val = meta[key]
        if key == "space":
            for p in val:
                lines.append(f"space.{p['name']} = [{p['min']!r}, {p['max']!r}] {p['unit']}".rstrip())
        elif key == "hyperparameters":
            for j, h in enumerate(val):
                ls = ", ".join(f"{v:.6g}" for v in h["lengthscales"])
                lines.append(f"gp{j} = signal {h['signal_variance']:.6g}, lengthscales [{ls}], "
                             f"noise {h['noise_variance']:.6g}")
        else:
            lines.append(f"{key} = {val}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)


def cmd_tutorial(args):
    from .tutorial import generate_tutorial_assets

    out = Path(args.out or "tutorial")
    digests = generate_tutorial_assets(out)
    log.info("wrote %d tutorial assets to %s", len(digests), out)


# -- argument parsing -----------------------------------------------------------------

COMMANDS = {
    "sample": (cmd_sample, "draw a Sobol' design on a parameter space"),
    "train": (cmd_train, "train a POD+GP surrogate and save it"),
    "cv": (cmd_cv, "repeated k-fold cross-validation"),
    "pod-sweep": (cmd_pod_sweep, "POD error versus number of snapshots"),
    "predict": (cmd_predict, "evaluate a saved surrogate on an inputs CSV"),
    "uq": (cmd_uq, "forward uncertainty propagation"),
    "sa": (cmd_sa, "Sobol' sensitivity indices"),
    "report": (cmd_report, "print a model file's metadata"),
    "tutorial": (cmd_tutorial, "regenerate the tutorial assets"),
}


def _add_options(p, name):
    g = p.add_argument_group("common")
    g.add_argument("--out", help="output file or directory")
    g.add_argument("--workers", type=int, help=f"worker processes (default: ${WORKERS_ENV} or CPU count)")
    g.add_argument("--quiet", action="store_true", default=None, help="no progress messages")
    g.add_argument("--config", help="INI file with default settings")
    g.add_argument("--seed", type=int, default=0)
    if name in ("sample", "train", "cv", "pod-sweep", "predict"):
        p.add_argument("--space", help="parameter-space file or 'isr3d'")
    if name in ("train", "cv", "pod-sweep", "predict", "uq", "sa", "report"):
        p.add_argument("--model", help="builtin model name or model file")
    if name in ("train", "cv", "pod-sweep", "predict"):
        p.add_argument("--data-inputs", help="inputs CSV with a header of parameter names")
    if name in ("train", "cv", "pod-sweep"):
        p.add_argument("--data-responses", help="responses CSV, one row per input row, no header")
        p.add_argument("--time-grid", help="time grid CSV, one value per line")
    if name in ("sample", "train", "cv", "pod-sweep", "uq", "sa"):
        p.add_argument("--n", type=int, help="number of samples (sa: total evaluations)")
        p.add_argument("--skip", type=int, default=1, help="leading Sobol' points to discard")
    if name in ("train", "cv", "pod-sweep"):
        p.add_argument("--energy-threshold", type=float, default=0.999)
    if name in ("train", "cv"):
        p.add_argument("--snapshots", type=int, help="snapshots used for the POD basis (default: all)")
        p.add_argument("--restarts", type=int, default=10, help="optimizer restarts per GP")
        p.add_argument("--qoi", help="name of the modelled quantity")
    if name == "cv":
        p.add_argument("--folds", type=int, default=4)
    if name in ("cv", "pod-sweep", "sa"):
        p.add_argument("--reps", type=int, default={"cv": 10, "pod-sweep": 10, "sa": 1}[name])
    if name == "pod-sweep":
        p.add_argument("--counts", default="10,20,30,40,50,60,70,80,90,100")
    if name == "sa":
        p.add_argument("--n-base", type=int, help="base sample size (overrides --n)")
    if name == "uq":
        p.add_argument("--threshold", type=float, action="append", help="exceedance threshold (repeatable)")
        p.add_argument("--direction", choices=("above", "below"), default="above")
        p.add_argument("--report-days", help="comma-separated times for tables and densities")
        p.add_argument("--sampler", choices=("sobol", "random"), default="sobol")
        p.add_argument("--bins", type=int, default=30)
        p.add_argument("--qoi", help="row label for the summary table")


def build_parser():
    parser = argparse.ArgumentParser(prog="podgp", description="POD + GP surrogate uncertainty quantification")
    parser.add_argument("--version", action="version", version=f"podgp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (func, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_)
        _add_options(p, name)
        p.set_defaults(func=func)
    parser.subcommands = sub.choices
    return parser


def _apply_config(parser, argv):
    """Re-parse with INI values installed as defaults so that flags win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    path = Path(args.config)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.read(path)
    values = {}
    for section in ("podgp", args.command):
        if cp.has_section(section):
            values.update({k.replace("-", "_"): v for k, v in cp[section].items()})
    cmd_parser = parser.subcommands[args.command]
    known = {a.dest: a for a in cmd_parser._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known or key in ("config", "help"):
            raise ConfigError(f"{path}: unknown setting {key!r} for command {args.command!r}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = [action.type(v) for v in _float_list(raw)]
        elif action.type is not None:
            defaults[key] = action.type(raw)
        else:
            defaults[key] = raw
    cmd_parser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except (PodGpError, OSError, ValueError) as exc:
        sys.stderr.write(f"podgp: error: {exc}\n")
        return 2
    logging.basicConfig(format="podgp: %(message)s", stream=sys.stderr, force=True,
                        level=logging.WARNING if args.quiet else logging.INFO)
    try:
        if args.workers is None:
            args.workers = default_workers()
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        args.func(args)
    except (PodGpError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"podgp: error: {msg}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
