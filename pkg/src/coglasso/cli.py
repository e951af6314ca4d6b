"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Options may also come from ``--config FILE`` (YAML mapping, keys spelled
like the long options with ``_`` or ``-``); explicit flags win.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .exceptions import CoglassoError, DataError, NumericalError, ParameterError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

logger = logging.getLogger("coglasso")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# option name -> default; None means required
_DEFAULTS = {
    "simulate": {"scenario": 1, "replicates": 1, "seed": 0, "out": None},
    "fit": {"data": None, "px": None, "lambda_w": None, "lambda_b": None, "c": 0.0,
            "out": None, "glasso": False, "no_standardize": False, "delimiter": None},
    "select": {"data": None, "px": None, "grid_w": 20, "grid_b": 20,
               "c_list": "0,0.1,0.5,1,10,100", "subsamples": 20, "stars_threshold": 0.05,
               "subsample_size": None, "seed": 0, "out": None, "fit_out": None,
               "no_standardize": False, "delimiter": None, "grid_ratio": 0.1},
    "bench": {"scenario": 1, "replicates": 20, "seed": 0, "full_scale": False,
              "no_selection": False, "subsamples": 20, "stars_threshold": 0.05, "out": None},
    "export": {"fit": None, "format": "json", "sign_convention": "paper", "out": None},
}
# optional values that legitimately stay unset
_OPTIONAL = {"delimiter", "subsample_size", "fit_out", "lambda_b", "px"}


def _build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="coglasso", description="Collaborative graphical lasso for two-layer data.")
    top.add_argument("--version", action="version", version=f"coglasso {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML file of option values")
    common.add_argument("--threads", type=int, default=None, help="worker cap")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)
    S = argparse.SUPPRESS

    p = sub.add_parser("simulate", parents=[common], help="generate a ground truth and replicates")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=S)
    p.add_argument("--replicates", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="output directory")

    def data_opts(p):
        p.add_argument("--data", nargs="+", default=S,
                       help="one table (with --px) or two tables, X then Z")
        p.add_argument("--px", type=int, default=S, help="number of leading X columns")
        p.add_argument("--delimiter", default=S)
        p.add_argument("--no-standardize", action="store_true", default=S)

    p = sub.add_parser("fit", parents=[common], help="fit one network")
    data_opts(p)
    p.add_argument("--lambda-w", type=float, default=S)
    p.add_argument("--lambda-b", type=float, default=S)
    p.add_argument("--c", type=float, default=S)
    p.add_argument("--glasso", action="store_true", default=S, help="plain glasso with lambda-w")
    p.add_argument("--out", default=S, help="fit JSON file")

    p = sub.add_parser("select", parents=[common], help="choose hyperparameters with XStARS")
    data_opts(p)
    p.add_argument("--grid-w", type=int, default=S)
    p.add_argument("--grid-b", type=int, default=S)
    p.add_argument("--grid-ratio", type=float, default=S)
    p.add_argument("--c-list", default=S, help="comma-separated c values")
    p.add_argument("--subsamples", type=int, default=S)
    p.add_argument("--subsample-size", type=int, default=S)
    p.add_argument("--stars-threshold", type=float, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="selection JSON file")
    p.add_argument("--fit-out", default=S, help="also write the refit at the selected values")

    p = sub.add_parser("bench", parents=[common], help="simulation benchmark")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=S)
    p.add_argument("--replicates", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--full-scale", action="store_true", default=S)
    p.add_argument("--no-selection", action="store_true", default=S)
    p.add_argument("--subsamples", type=int, default=S)
    p.add_argument("--stars-threshold", type=float, default=S)
    p.add_argument("--out", default=S, help="report directory")

    p = sub.add_parser("export", parents=[common], help="export a fitted network")
    p.add_argument("--fit", default=S)
    p.add_argument("--format", choices=("edgelist", "graphml", "json"), default=S)
    p.add_argument("--sign-convention", choices=("paper", "standard"), default=S)
    p.add_argument("--out", default=S, help="output file (stdout when omitted)")
    return top


def _options(command: str, ns: argparse.Namespace) -> dict:
    from .io import load_config

    cfg = load_config(ns.config) if ns.config else {}
    defaults = _DEFAULTS[command]
    unknown = sorted(set(cfg) - set(defaults) - {"threads"})
    if unknown:
        raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    opts = {}
    for key, default in defaults.items():
        opts[key] = getattr(ns, key) if hasattr(ns, key) else cfg.get(key, default)
    for key, value in opts.items():
        if value is None and key not in _OPTIONAL and not (command == "export" and key == "out"):
            raise UsageError(f"{command}: missing required option --{key.replace('_', '-')}")
    threads = ns.threads if ns.threads is not None else cfg.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        raise UsageError("--threads must be a positive integer")
    opts["threads"] = threads
    return opts


_UNHASHED = {"threads", "out", "fit_out"}


def _hashed(opts: dict) -> dict:
    # worker count and output locations never change results
    return {k: v for k, v in opts.items() if k not in _UNHASHED}


def _dataset(opts):
    from .io import DatasetSpec

    data = opts["data"]
    paths = [data] if isinstance(data, str) else list(data)
    if len(paths) == 1 and opts["px"] is None:
        raise UsageError("a single --data file needs --px")
    if len(paths) == 2 and opts["px"] is not None:
        raise UsageError("--px cannot be combined with two --data files")
    if len(paths) > 2:
        raise UsageError("--data takes one or two files")
    return DatasetSpec(tuple(paths), opts["px"], opts["delimiter"], True, not opts["no_standardize"])


def _say(line: str):
    print(line, flush=True)


def cmd_simulate(opts) -> int:
    from .io import default_labels, provenance, reproducibility_line, write_table
    from .simgen import generate_replicates, scenario_preset

    spec = scenario_preset(opts["scenario"])
    if opts["replicates"] < 0:
        raise UsageError("--replicates must be nonnegative")
    truth, data = generate_replicates(spec, opts["replicates"], opts["seed"])
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    labels = default_labels(spec.partition)
    doc = {"scenario": spec.as_dict(), "p_x": spec.p_x, "p_z": spec.p_z, "labels": labels,
           "theta": truth.theta.tolist(), "sigma": truth.sigma.tolist(),
           "adjacency": truth.adjacency.astype(int).tolist(), "epsilon": truth.epsilon,
           "epsilon_doublings": truth.epsilon_doublings, "activation": truth.activation,
           "provenance": provenance(opts["seed"], _hashed(opts))}
    (out / "truth.json").write_text(json.dumps(doc, indent=1) + "\n")
    for r, X in enumerate(data):
        write_table(out / f"replicate_{r:03d}.csv", X, labels)
    _say(f"wrote truth and {len(data)} replicate(s) to {out} (p_x={spec.p_x}, p_z={spec.p_z})")
    _say(reproducibility_line(opts["seed"], _hashed(opts)))
    return EXIT_OK


def cmd_fit(opts) -> int:
    from .core import Hyperparameters
    from .io import covariance_for, load_dataset, provenance, reproducibility_line, save_fit
    from .solver import fit, fit_glasso

    spec = _dataset(opts)
    data, part, labels = load_dataset(spec)
    S = covariance_for(data, spec)
    lw = opts["lambda_w"]
    if opts["glasso"]:
        f = fit_glasso(S, lw)
    else:
        if opts["lambda_b"] is None:
            raise UsageError("fit: missing required option --lambda-b")
        f = fit(S, Hyperparameters(lw, opts["lambda_b"], opts["c"]), part)
    save_fit(f, opts["out"], labels, provenance(None, _hashed(opts)))
    status = "converged" if f.converged else "NOT converged"
    _say(f"{f.method}: {f.edge_count()} edges, {f.iterations} sweeps, {status}; wrote {opts['out']}")
    _say(reproducibility_line(None, _hashed(opts)))
    return EXIT_OK


def _c_list(text) -> list:
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        vals = [v for v in str(text).split(",") if v.strip()]
    try:
        out = [float(v) for v in vals]
    except ValueError:
        raise UsageError(f"--c-list must be comma-separated numbers, got {text!r}") from None
    if not out:
        raise UsageError("--c-list is empty")
    return out


def cmd_select(opts) -> int:
    from .core import default_lambda_grid
    from .io import covariance_for, load_dataset, provenance, reproducibility_line, save_fit
    from .selection import StabilityConfig, xstars
    from .solver import fit

    spec = _dataset(opts)
    data, part, labels = load_dataset(spec)
    S = covariance_for(data, spec)
    c_list = _c_list(opts["c_list"])
    gw = default_lambda_grid(S, opts["grid_w"], opts["grid_ratio"])
    gb = default_lambda_grid(S, opts["grid_b"], opts["grid_ratio"])
    cfg = StabilityConfig(num_subsamples=opts["subsamples"], subsample_size=opts["subsample_size"],
                          instability_threshold=opts["stars_threshold"], seed=opts["seed"],
                          threads=opts["threads"])
    sel = xstars(data, gw, gb, c_list, cfg, part, standardize=spec.standardize)
    doc = {"selection": sel.as_dict(), "grids": {"lambda_w": gw.tolist(), "lambda_b": gb.tolist(),
                                                   "c": c_list},
           "provenance": provenance(opts["seed"], _hashed(opts))}
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    Path(opts["out"]).write_text(text)
    if opts["fit_out"]:
        save_fit(fit(S, sel.hyper, part), opts["fit_out"], labels, doc["provenance"])
    _say(f"selected lambda_w={sel.lambda_w_hat:.6g} lambda_b={sel.lambda_b_hat:.6g} "
         f"c={sel.c_hat:g} after {sel.iterations} sweeps; wrote {opts['out']}")
    _say(reproducibility_line(opts["seed"], _hashed(opts)))
    return EXIT_OK


def cmd_bench(opts) -> int:
    from .bench import GridSpec, run_scenario
    from .io import reproducibility_line, write_report
    from .selection import StabilityConfig
    from .simgen import scenario_preset

    spec = scenario_preset(opts["scenario"])
    grids = GridSpec.full_scale() if opts["full_scale"] else GridSpec()
    stab = StabilityConfig(num_subsamples=opts["subsamples"],
                           instability_threshold=opts["stars_threshold"], seed=opts["seed"])
    report = run_scenario(spec, opts["replicates"], opts["seed"], grids, stability=stab,
                          selection=not opts["no_selection"], threads=opts["threads"])
    paths = write_report(report, opts["out"])
    agg = report.aggregates.get("oracle", {})
    for m in ("coglasso", "glasso"):
        if m in agg:
            _say(f"oracle {m}: median F1 {agg[m]['f1']['median']:.3f}, "
                 f"median KLD {agg[m]['kld']['median']:.3f}")
    if not report.complete:
        _say(f"{len(report.failures)} replicate(s) failed; see {paths['summary']}")
    _say(f"wrote {', '.join(str(p) for p in paths.values())}")
    _say(reproducibility_line(opts["seed"], _hashed(opts)))
    return EXIT_OK if report.complete else EXIT_NUMERICAL


def cmd_export(opts) -> int:
    from .io import export_network, load_fit, reproducibility_line

    f, labels, prov = load_fit(opts["fit"])
    text = export_network(f, labels, opts["format"], opts["sign_convention"], opts["out"], prov)
    line = reproducibility_line(prov.get("seed"), _hashed(opts))
    if opts["out"] is None:
        # keep stdout clean for piping
        sys.stdout.write(text)
        print(line, file=sys.stderr)
    else:
        _say(f"wrote {opts['out']}")
        _say(line)
    return EXIT_OK


_COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "select": cmd_select,
             "bench": cmd_bench, "export": cmd_export}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = _build_parser().parse_args(argv)
        if ns.command is None:
            raise UsageError("coglasso: choose a command: " + ", ".join(_COMMANDS))
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        opts = _options(ns.command, ns)
        return _COMMANDS[ns.command](opts)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CoglassoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
