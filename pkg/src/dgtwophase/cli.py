"""Command line driver.

    dgtwophase --config run.cfg --override scheme.tau=5 --output out/

Writes ``diagnostics.csv``, ``line_t*.csv``, ``snapshot_*.vtk`` and
``summary.txt`` to the output directory.  Exit status is 0 on success,
1 when a time step fails and 2 for configuration errors.
"""
import argparse
import logging
import os
import sys


def build_parser():
    p = argparse.ArgumentParser(prog="dgtwophase",
                                description="hp-adaptive DG two-phase porous media flow")
    p.add_argument("--config", help="sectioned key=value run file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set section.key, e.g. scheme.tau=5 (repeatable)")
    p.add_argument("--output", help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for BLAS/numba")
    p.add_argument("--quiet", action="store_true", help="no per-step progress lines")
    p.add_argument("--print-config", action="store_true",
                   help="print the resolved configuration and exit")
    return p


def _set_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMBA_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    _set_threads(args.threads)
    # heavy imports only after the thread environment is fixed
    from .config import ConfigError, dump_config, load_config
    from .simulation import Simulation

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.override)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    if args.output:
        cfg.output_dir = args.output
    if args.print_config:
        print(dump_config(cfg))
        return 0
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
    except OSError as err:
        print(f"cannot create output directory: {err}", file=sys.stderr)
        return 2
    with open(os.path.join(cfg.output_dir, "run.cfg"), "w") as fh:
        fh.write(dump_config(cfg))
    res = Simulation(cfg).run(quiet=args.quiet)
    if not res.ok:
        f = res.failure
        print(f"step failure: scheme={f.scheme} t={f.t:g} reason={f.reason}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"finished t={res.t:g} steps={res.steps} wall={res.wall:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
