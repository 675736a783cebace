"""Command-line entry point.

Subcommands:
    run             execute a config-driven experiment
    resume          continue a run from its persisted snapshots
    oracle-check    validate the closed-form oracles against themselves
    identity-check  random-matrix checks of the determinant / curvature identity
"""

import argparse
import sys

import numpy as np

from . import runner
from .errors import ConfigurationError, FiberflowError, OracleDefectError
from .forms import HermitianForm, geodesic_curvature, volume_identity_gap
from .oracles import ORACLE_KINDS, oracle, self_check


def _add_common(sub):
    sub.add_argument("--config", required=True, help="path to the TOML config")
    sub.add_argument("--out", default=None, help="output directory override")
    sub.add_argument("--workers", type=int, default=None,
                     help="worker-pool size override")
    sub.add_argument("--verbose", action="store_true")


def _random_form(rng, n):
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    fiber = b @ b.conj().T + 0.1 * np.eye(n)
    mixed = rng.normal(size=n) + 1j * rng.normal(size=n)
    ss = rng.normal()
    return HermitianForm(n=n, fiber_block=fiber, mixed=mixed, ss=ss)


def identity_check(n_cases=1000, seed=0, verbose=False):
    """volume identity + sign agreement on random forms; returns worst gaps."""
    rng = np.random.default_rng(seed)
    worst_rel, sign_fail = 0.0, 0
    for i in range(n_cases):
        form = _random_form(rng, 1 if i % 2 == 0 else 2)
        det_fiber = abs(np.linalg.det(form.fiber_block).real)
        gap = volume_identity_gap(form) / max(det_fiber, 1.0)
        worst_rel = max(worst_rel, gap)
        c = geodesic_curvature(form)
        min_eig = float(np.linalg.eigvalsh(form.full_matrix()).min())
        # c >= 0 iff the full matrix is positive semidefinite (fiber block PD)
        if (c >= 0) != (min_eig >= -1e-12 * max(1.0, abs(min_eig))):
            if abs(c) > 1e-12:
                sign_fail += 1
    if verbose:
        print(f"identity-check: {n_cases} cases, worst relative gap "
              f"{worst_rel:.3e}, sign disagreements {sign_fail}")
    return worst_rel, sign_fail


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fiberflow",
        description="Fiberwise Kahler-Ricci flow numerical laboratory")
    subs = parser.add_subparsers(dest="command", required=True)
    _add_common(subs.add_parser("run", help="execute a config-driven run"))
    _add_common(subs.add_parser("resume", help="continue from snapshots"))
    p_or = subs.add_parser("oracle-check", help="validate the analytic oracles")
    p_or.add_argument("--points", type=int, default=500)
    p_or.add_argument("--verbose", action="store_true")
    p_id = subs.add_parser("identity-check",
                           help="random checks of the determinant identity")
    p_id.add_argument("--cases", type=int, default=1000)
    p_id.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    if args.command in ("run", "resume"):
        try:
            config = runner.load_config(args.config)
        except ConfigurationError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"io error: {exc}", file=sys.stderr)
            return runner.EXIT_IO
        fn = runner.run if args.command == "run" else runner.resume
        return fn(config, out_dir=args.out, workers=args.workers,
                  verbose=args.verbose)

    if args.command == "oracle-check":
        try:
            for kind in ORACLE_KINDS:
                report = self_check(oracle(kind), n_points=args.points)
                if args.verbose:
                    print(f"{kind}: max fd error {report['max_fd_rel_error']:.3e}, "
                          f"max c error {report['max_c_error']:.3e}")
        except OracleDefectError as exc:
            print(f"oracle defect: {exc}", file=sys.stderr)
            return 1
        print("oracle-check: all cases pass")
        return 0

    if args.command == "identity-check":
        worst, fails = identity_check(n_cases=args.cases, verbose=args.verbose)
        ok = worst <= 1e-12 and fails == 0
        print(f"identity-check: {'pass' if ok else 'FAIL'} "
              f"(worst relative gap {worst:.3e}, sign disagreements {fails})")
        return 0 if ok else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
