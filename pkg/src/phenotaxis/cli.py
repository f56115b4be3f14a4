"""Command-line entry point: ``phenotaxis {run,sweep,stability,presets,plot-data}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys

from . import __version__
from .experiments.config import SWEEP_AXES, ConfigError, RunConfig
from .experiments.presets import PRESETS, get_preset
from .experiments.runner import PLOT_KINDS, RunRecord, emit_plot_data, run, sweep
from .model import instability_bound, stability_scan

_CONFIG_KEYS = [f.name for f in dataclasses.fields(RunConfig)]


def _add_config_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="FILE", help="flat TOML run configuration")
    src.add_argument("--preset", metavar="NAME", help="start from a named preset")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override a config key (repeatable)")
    keys = p.add_argument_group("config keys", "each flag overrides the same key in the file")
    for key in _CONFIG_KEYS:
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        keys.add_argument(*flags, dest=f"key_{key}", metavar="V", default=None)


def _resolve_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    elif args.preset:
        cfg = get_preset(args.preset)
    else:
        cfg = RunConfig()
    flags = [f"{k}={getattr(args, 'key_' + k)}" for k in _CONFIG_KEYS
             if getattr(args, "key_" + k) is not None]
    # explicit flags first so that --set, given last on purpose, wins ties
    return cfg.with_overrides(flags + list(args.set))


def _fmt(x) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.6g}"


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    rec = run(cfg)
    print(f"{cfg.name}: {rec.cause} t_event={_fmt(rec.t_event)} peak={_fmt(rec.peak)} "
          f"mass_drift={_fmt(rec.mass_drift)} wall={rec.wall_time:.1f}s")
    print(f"record: {cfg.output_dir}/{cfg.name}/record.json")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    summary, _ = sweep(cfg, args.axis, values, workers=args.workers)
    print("value,cause,t_event,peak,mass_drift,lemma44_margin")
    for row in summary:
        print(",".join([_fmt(row[0]), row[1]] + [_fmt(x) for x in row[2:]]))
    return 1 if any(row[1] == "error" for row in summary) else 0


def cmd_stability(args) -> int:
    cfg = _resolve_config(args)
    spec = cfg.model()
    rep = stability_scan(spec, cfg.rho, cfg.mesh(), kappa_max=args.kappa_max)
    print(f"# {spec.kind} rho={cfg.rho:g} dim={cfg.dim} N={cfg.N}")
    print(f"# continuous instability bound kappa < {instability_bound(spec, cfg.rho):.6g}")
    print("# kappa growth_rate")
    for k, g in rep.to_rows():
        print(f"{k:.10g} {g:.10g}")
    verdict = "unstable" if rep.unstable else "stable"
    print(f"# {verdict}; most unstable mode kappa={_fmt(rep.most_unstable_mode[0])} "
          f"rate={_fmt(rep.most_unstable_mode[1])}")
    return 0


def cmd_presets(args) -> int:
    if args.action == "list":
        for name in sorted(PRESETS):
            print(name)
        return 0
    if not args.name:
        print(f"presets {args.action} needs a preset name", file=sys.stderr)
        return 2
    cfg = get_preset(args.name)
    if args.action == "show":
        sys.stdout.write(cfg.dumps())
    else:
        path = args.path or f"{args.name}.toml"
        cfg.save(path)
        print(path)
    return 0


def cmd_plot_data(args) -> int:
    records = [RunRecord.load(p) for p in args.records]
    for p in emit_plot_data(records, args.kind, args.out):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phenotaxis", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one configuration")
    _add_config_source(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat a run over values of one parameter")
    _add_config_source(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated, e.g. 1,10,100")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stability", help="linear stability of the uniform state on the mesh")
    _add_config_source(p)
    p.add_argument("--kappa-max", type=float, default=None,
                   help="largest Laplacian eigenvalue scanned (default: twice the bound plus 4)")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("presets", help="list, show or write named configurations")
    p.add_argument("action", choices=("list", "show", "write"))
    p.add_argument("name", nargs="?")
    p.add_argument("path", nargs="?")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("plot-data", help="column files from run records")
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--out", default="plot-data", help="output directory")
    p.add_argument("records", nargs="+", help="record.json files or run directories")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
