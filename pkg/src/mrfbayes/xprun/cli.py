"""``xprun`` command line: run an experiment or the enumeration-oracle harness."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..abc import AbcFailure
from ..models import ModelError
from ..smc import SmcFailure
from .config import ConfigError, load_raw, preset_names, resolve
from .runner import analytic_sweeps, build_model, format_oracle_table, run_experiment, run_oracle, sweep_audit

EXIT_OK, EXIT_CONFIG, EXIT_SAMPLER = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xprun", description="Run latent-MRF inference experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run one experiment"), ("oracle", "compare samplers with exact enumeration")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("config", help="config JSON file or bundled preset name")
        c.add_argument("--seed", type=int, default=None)
        c.add_argument("--out", default=None, help="output directory (default runs/<name>)")
        c.add_argument("--paper-scale", action="store_true", help="apply the preset's full-budget settings")
        c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set chain.n_keep=100")
        if name == "run":
            c.add_argument("--dry-run", action="store_true",
                           help="validate and print the analytic sweep budget without running")
    sub.add_parser("presets", help="list bundled presets")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    try:
        cfg = resolve(load_raw(args.config), args.paper_scale, args.seed, args.set)
        out = Path(args.out) if args.out else Path("runs") / (cfg["name"] or Path(args.config).stem)
        if args.command == "oracle":
            table = run_oracle(cfg, out)
            print(format_oracle_table(table))
            return EXIT_OK
        if args.dry_run:
            total = analytic_sweeps(cfg, build_model(cfg))
            print(json.dumps({"name": cfg["name"], "algorithm": cfg["algorithm"], "analytic_sweeps": total}))
            return EXIT_OK
        report = run_experiment(cfg, out)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SmcFailure, AbcFailure) as exc:
        print(f"sampler failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    ok, msg = sweep_audit(report, cfg)
    print(f"{report.name}: {report.iterations} iterations, acceptance {report.acceptance_rate:.3f}, "
          f"{report.wall_time_s:.1f}s, sweep audit {msg}")
    print(f"outputs in {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
