"""Command line front end: varopt {converge, ocp, beam-damping}.

Each subcommand reads a config file and writes its artifacts to the output
directory given by --out (falling back to the [output] directory key of the
config).  Exit codes: 0 on success, 2 for config problems, 3 when a solver
fails or a run-time check does not hold.  Solver failures still leave a
manifest.json behind describing what happened.
"""

import argparse
import sys

from varopt.numerics import NonConvergence, SingularJacobian
from varopt.beam import BeamStepFailure
from varopt.harness import ConfigError, EnergyCheckFailure, parse_config, \
    run_convergence, run_damping_demo, run_ocp

_RUNNERS = {
    "converge": ("converge", run_convergence,
                 "state/adjoint convergence sweep against a fine reference"),
    "ocp": ("ocp", run_ocp,
            "shooting optimization of a benchmark control task"),
    "beam-damping": ("damping", run_damping_demo,
                     "uncontrolled cantilever ring-down with energy audit"),
}

_FAILURE_STATUSES = ("forward_failure", "adjoint_failure", "energy_check_failed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="varopt",
        description="variational integrator experiments driven by config files")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, _, help_text) in _RUNNERS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the config file")
        sp.add_argument("--out", default=None,
                        help="output directory (default: the config's "
                             "[output] directory)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind, runner, _ = _RUNNERS[args.command]
    try:
        cfg = parse_config(args.config, kind)
        out_dir = args.out or cfg.out_dir
        if out_dir is None:
            raise ConfigError("no output directory: pass --out or set "
                              "[output] directory in the config")
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    try:
        manifest = runner(cfg, out_dir)
    except (NonConvergence, BeamStepFailure, SingularJacobian,
            EnergyCheckFailure) as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return 3
    status = manifest.get("status", "ok")
    if status in _FAILURE_STATUSES:
        print("solver failure: run ended with status %r (see manifest.json)"
              % status, file=sys.stderr)
        return 3
    print("ok: wrote %d artifact(s) to %s"
          % (len(manifest.get("outputs", [])) + 1, out_dir))
    return 0


if __name__ == "__main__":
    sys.exit(main())
