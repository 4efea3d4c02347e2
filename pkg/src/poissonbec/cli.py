"""Command-line entry point.

Subcommands::

    poissonbec sample --rate 1 --box-length 100 --seed 7
    poissonbec spectrum --rate 1 --box-length 100 --seed 7 --strength 10 --k 5
    poissonbec occupancy --energies 1,2,3 --box-length 1 --density 1 --beta 1
    poissonbec experiment gap-law --config cfg.ini --threads 8

Data goes to stdout, diagnostics to stderr. Exit status is 0 on success,
1 on a numerical failure and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import point_process as pp
from . import spectral as sp
from . import thermo as th
from .errors import (
    DomainError,
    InvalidParameterError,
    NumericalFailure,
    PreconditionError,
    TruncationError,
)
from .experiments.config import KINDS, ConfigError, build_config, parse_config_text

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad command line; reported with exit status 2."""


@dataclass
class CliInvocation:
    subcommand: str
    flags: dict = field(default_factory=dict)
    config_path: Optional[str] = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _kind(text):
    kind = text.replace("-", "_")
    if kind not in KINDS:
        raise argparse.ArgumentTypeError(
            f"unknown experiment {text!r}; choose from {', '.join(k.replace('_', '-') for k in KINDS)}")
    return kind


def _realisation_flags(p, required=True):
    p.add_argument("--rate", type=float, required=required, help="Poisson intensity nu")
    p.add_argument("--box-length", type=float, required=required, help="box length L")
    p.add_argument("--seed", type=int, required=required, help="realisation seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poissonbec", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser, required=True)

    p = sub.add_parser("sample", help="print atoms and gap order statistics as CSV")
    _realisation_flags(p)

    p = sub.add_parser("spectrum", help="print the lowest eigenvalues of one realisation")
    _realisation_flags(p)
    p.add_argument("--shape", default="box", choices=sp.SHAPES)
    p.add_argument("--shape-param", type=float, default=1.0)
    p.add_argument("--support-left", type=float, default=0.5)
    p.add_argument("--support-right", type=float, default=0.5)
    p.add_argument("--samples", type=_float_list, default=None)
    p.add_argument("--strength", type=float, default=1.0)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--boundary", default=sp.DIRICHLET, choices=(sp.DIRICHLET, sp.NEUMANN))
    p.add_argument("--grid-spacing", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("occupancy", help="solve for mu and print occupation numbers")
    p.add_argument("--energies", type=_float_list, default=None,
                   help="synthetic spectrum instead of a Luttinger-Sy realisation")
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--box-length", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--density", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--energy-cutoff", type=float, default=40.0,
                   help="keep realisation levels below E1 + cutoff/beta")
    p.add_argument("--eps", type=float, default=None, help="band edge for the band fraction")

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment and write a report")
    p.add_argument("kind", type=_kind)
    p.add_argument("--config", default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    return parser


def parse_and_validate(argv) -> CliInvocation:
    """Parse ``argv``; raise :class:`UsageError` on anything malformed."""
    args = vars(build_parser().parse_args(list(argv)))
    cmd = args.pop("subcommand")
    config_path = args.pop("config", None)
    if cmd == "occupancy":
        if args["energies"] is None and (args["rate"] is None or args["seed"] is None):
            raise UsageError("occupancy needs --energies or both --rate and --seed")
    if cmd == "experiment":
        if args["threads"] < 1:
            raise UsageError("--threads must be at least 1")
        file_values = {}
        if config_path is not None:
            try:
                with open(config_path, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise UsageError(f"cannot read config: {exc}") from None
            try:
                file_values = parse_config_text(text, args["kind"], config_path)
            except ConfigError as exc:
                raise UsageError(str(exc)) from None
        overrides = {"kind": args["kind"], "seed": args["seed"], "trials": args["trials"],
                     "out_dir": args["out_dir"]}
        try:
            args["config"] = build_config(file_values, overrides)
        except (InvalidParameterError, TypeError) as exc:
            raise UsageError(str(exc)) from None
    return CliInvocation(cmd, args, config_path)


def _num(x) -> str:
    return repr(float(x))


def _sample(flags, out):
    conf = pp.sample_configuration(flags["rate"], flags["box_length"], flags["seed"])
    stats = pp.clipped_gaps(conf)
    out.write("record,index,value\n")
    for i, a in enumerate(conf.atoms, 1):
        out.write(f"atom,{i},{_num(a)}\n")
    for i, g in enumerate(stats.gaps, 1):
        out.write(f"gap,{i},{_num(g)}\n")
    for i, g in enumerate(stats.sorted_desc, 1):
        out.write(f"ranked_gap,{i},{_num(g)}\n")


def _spectrum(flags, out):
    conf = pp.sample_configuration(flags["rate"], flags["box_length"], flags["seed"])
    site = sp.SingleSitePotential(flags["shape"], flags["shape_param"], flags["support_left"],
                                  flags["support_right"], flags["strength"], flags["samples"])
    h = flags["grid_spacing"] or sp.default_grid_spacing(site, flags["box_length"])
    op = sp.discretize(sp.assemble_potential(conf, site, h), flags["boundary"])
    spec = sp.lowest_eigenvalues(op, flags["k"], flags["tol"])
    out.write("j,eigenvalue\n")
    for j, e in enumerate(spec.eigenvalues, 1):
        out.write(f"{j},{_num(e)}\n")


def _occupancy(flags, out):
    L, beta, rho = flags["box_length"], flags["beta"], flags["density"]
    if flags["energies"] is not None:
        e = np.sort(np.asarray(flags["energies"], dtype=float))
        spec = sp.Spectrum(e, e.size)
    else:
        conf = pp.sample_configuration(flags["rate"], L, flags["seed"])
        stats = pp.clipped_gaps(conf)
        e1 = float(sp.luttinger_sy_eigenvalues(stats, 1).eigenvalues[0])
        spec = sp.luttinger_sy_levels_below(stats, e1 + flags["energy_cutoff"] / beta)
    state = th.thermo_state(spec, rho, beta, L)
    n_particles = rho * L
    eps = flags["eps"] if flags["eps"] is not None else float(spec.eigenvalues[0])
    band = float(state.occupations[spec.eigenvalues <= eps].sum()) / n_particles
    out.write(f"mu,{_num(state.chemical_potential)}\n")
    out.write(f"residual,{_num(state.residual)}\n")
    out.write(f"band_fraction,{_num(band)}\n")
    out.write("j,energy,occupation,fraction\n")
    for j, (ej, nj) in enumerate(zip(spec.eigenvalues, state.occupations), 1):
        out.write(f"{j},{_num(ej)},{_num(nj)},{_num(nj / n_particles)}\n")


def _experiment(flags, out):
    from .experiments.runners import run_experiment

    cfg = flags["config"]
    report = run_experiment(cfg, threads=flags["threads"])
    path = report.write(cfg.out_dir)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out.write(f"{path / 'summary.json'}\n")


_HANDLERS = {"sample": _sample, "spectrum": _spectrum, "occupancy": _occupancy,
             "experiment": _experiment}


def execute(invocation: CliInvocation, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    seed = invocation.flags.get("seed")
    where = f" (seed {seed})" if seed is not None else ""
    try:
        _HANDLERS[invocation.subcommand](invocation.flags, out)
    except (NumericalFailure, TruncationError) as exc:
        detail = getattr(exc, "detail", None)
        print(f"numerical failure{where}: {exc}" + (f" [{detail}]" if detail is not None else ""),
              file=err)
        return EXIT_NUMERIC
    except (InvalidParameterError, PreconditionError, DomainError) as exc:
        print(f"error{where}: {exc}", file=err)
        return EXIT_USAGE
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        invocation = parse_and_validate(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    return execute(invocation)


if __name__ == "__main__":
    sys.exit(main())
