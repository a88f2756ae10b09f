"""Command-line interface: ``qfb bound | verify | simulate``.

Exit codes: 0 ok, 1 violation, 2 malformed input, 3 infeasible energy
constraint, 4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import bounds, channels, serialize, tolerances, verify
from .bounds import EnergyConstraint, InfeasibleConstraint
from .channels import ChannelMixture
from .protocol import (
    DEFAULT_DIM_CAP,
    DimensionCapExceeded,
    noiseless_qubit_spec,
    random_spec,
    run_mixture_simulation,
    run_purified,
)
from .serialize import SpecError

EXIT_OK, EXIT_VIOLATION, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_RESOURCE = 0, 1, 2, 3, 4

NAMED = ("erasure", "identity", "pure_loss", "depolarizing", "dephasing", "amplitude_damping")


class UsageError(ValueError):
    pass


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"--named {args.named} needs {', '.join(missing)}")


def build_channel(args):
    """Channel and energy constraint from ``--named``/``--channel`` flags."""
    if (args.named is None) == (args.channel is None):
        raise UsageError("give exactly one of --named or --channel")
    ec = EnergyConstraint.none()
    if args.channel is not None:
        ch = serialize.decode_channel(serialize.read_json(args.channel))
    elif args.named == "erasure":
        _require(args, "d", "p")
        ch = channels.make_erasure(args.d, args.p)
    elif args.named == "identity":
        _require(args, "d")
        ch = channels.identity_channel(args.d)
    elif args.named == "depolarizing":
        _require(args, "d", "q")
        ch = channels.depolarizing(args.d, args.q)
    elif args.named == "dephasing":
        _require(args, "p")
        ch = channels.dephasing(args.p)
    elif args.named == "amplitude_damping":
        _require(args, "gamma")
        ch = channels.amplitude_damping(args.gamma)
    else:
        _require(args, "eta", "ns")
        ch = channels.truncated_pure_loss(args.eta, args.cutoff)
        ec = EnergyConstraint.of(channels.number_operator(ch.dim_in).entries, args.ns)
    if args.energy is not None:
        if args.named == "pure_loss":
            raise UsageError("pure_loss takes its energy budget from --ns")
        ec = EnergyConstraint.of(np.diag(np.arange(ch.dim_in, dtype=float)), args.energy)
    return ch, ec


def _emit(args, payload: dict, rows: list[dict] | None = None) -> None:
    if args.format == "csv":
        buf = io.StringIO()
        rows = rows or [payload]
        writer = csv.DictWriter(buf, fieldnames=list(dict.fromkeys(k for r in rows for k in r)),
                                lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        text = buf.getvalue()
    else:
        text = serialize.dumps(payload) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _say(args, line: str) -> None:
    # with no --output the report itself goes to stdout, so keep summaries on stderr
    print(line, file=sys.stdout if args.output else sys.stderr)


def cmd_bound(args) -> int:
    ch, ec = build_channel(args)
    if isinstance(ch, ChannelMixture):
        report = bounds.max_avg_output_entropy(ch, ec, max_iter=args.max_iter, gap_tol=args.gap_tol)
    else:
        report = bounds.max_output_entropy(ch, ec, max_iter=args.max_iter, gap_tol=args.gap_tol)
    payload = report.to_json()
    payload["diagnostics"] = dict(payload["diagnostics"])
    if args.named == "pure_loss":
        payload["diagnostics"]["tail_mass"] = bounds.fock_tail_mass(report)
        payload["diagnostics"]["g_reference"] = bounds.g_function(args.eta * args.ns)
    _say(args, f"per-use bound: {report.value:.10f} bits")
    if args.n is not None or args.epsilon is not None:
        if args.n is None or args.epsilon is None:
            raise UsageError("--n and --epsilon go together")
        rate = bounds.feedback_rate_bound(args.n, args.epsilon, report.value)
        payload["feedback_rate_bound"] = {"n": args.n, "epsilon": args.epsilon, "log2_M_max": rate}
        _say(args, f"log2 M <= {rate:.10f} for n={args.n}, epsilon={args.epsilon}")
    _emit(args, payload)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        results = verify.run_suite(args.suite, trials=args.trials, dims=args.dims, seed=args.seed,
                                   protocols=args.protocols, replay_dir=args.replay_dir)
    except verify.CounterexampleFound as exc:
        _say(args, f"COUNTEREXAMPLE {exc.name}: margin {exc.margin!r}; replay file: {exc.path}")
        return EXIT_VIOLATION
    for r in results:
        verdict = "PASS" if r.passed else "FAIL"
        _say(args, f"{verdict} {r.name}: trials={r.trials} violations={r.violations} "
                   f"worst_margin={r.worst_margin:.3e}")
    payload = {"results": [r.to_json(args.margins) for r in results]}
    rows = [{k: v for k, v in r.to_json().items() if k != "details"} for r in results]
    _emit(args, payload, rows)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VIOLATION


def _load_spec(args):
    if args.spec is not None:
        if args.random:
            raise UsageError("give either a spec file or --random, not both")
        return serialize.decode_spec(serialize.read_json(args.spec))
    if args.random:
        channel = channels.make_erasure(2, args.erasure_p) if args.mixture else None
        return random_spec(args.n, args.M, args.seed, channel=channel)
    if args.trivial:
        return noiseless_qubit_spec()
    raise UsageError("simulate needs a spec file, --random or --trivial")


def cmd_simulate(args) -> int:
    spec = _load_spec(args)
    ec = EnergyConstraint.of(spec.hamiltonian, spec.energy_budget)
    if spec.is_mixture:
        trace = run_mixture_simulation(spec, dim_cap=args.dim_cap)
        bound = bounds.max_avg_output_entropy(spec.channel, ec)
        check = verify.check_theorem2_chain(trace, bound, constraint=ec, seed=args.seed)
    else:
        trace = run_purified(spec, dim_cap=args.dim_cap)
        bound = bounds.max_output_entropy(spec.channel, ec)
        check = verify.check_theorem1_chain(trace, bound, constraint=ec, seed=args.seed)
    verdict = "PASS" if check.passed else "FAIL"
    _say(args, f"epsilon: {trace.error_probability:.10g}")
    _say(args, f"average energy: {trace.average_energy:.10g}")
    _say(args, f"chain: {verdict} (worst margin {check.worst_margin:.3e})")
    payload = serialize.encode_trace(trace, dump_states=args.dump_states)
    payload["bound_value_bits"] = bound.value
    payload["chain"] = check.to_json()
    rows = [{k: v for k, v in r.items() if not isinstance(v, (list, dict))} for r in payload["rounds"]]
    _emit(args, payload, rows)
    return EXIT_OK if check.passed else EXIT_VIOLATION


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfb", description="Output-entropy bounds for feedback-assisted "
                                     "classical communication over quantum channels.")
    parser.add_argument("--tol", help="JSON object of tolerance overrides (same keys as QFB_TOL_OVERRIDE)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def io_flags(p):
        p.add_argument("--output", "-o", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    b = sub.add_parser("bound", help="maximum (average) output entropy of a channel")
    b.add_argument("--named", choices=NAMED)
    b.add_argument("--channel", help="channel JSON file (Kraus channel or mixture)")
    b.add_argument("--d", type=int)
    b.add_argument("--p", type=float)
    b.add_argument("--q", type=float)
    b.add_argument("--gamma", type=float)
    b.add_argument("--eta", type=float)
    b.add_argument("--ns", type=float, help="mean photon number budget (pure_loss)")
    b.add_argument("--cutoff", type=int, default=20, help="Fock cutoff for pure_loss")
    b.add_argument("--energy", type=float, help="budget for H = diag(0, 1, ..., d-1)")
    b.add_argument("--n", type=int)
    b.add_argument("--epsilon", type=float)
    b.add_argument("--max-iter", type=int, default=500)
    b.add_argument("--gap-tol", type=float, default=1e-6)
    io_flags(b)
    b.set_defaults(func=cmd_bound)

    v = sub.add_parser("verify", help="randomized verification fleets")
    v.add_argument("suite", choices=verify.SUITES + ("all",))
    v.add_argument("--trials", type=int, default=500)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--dims", type=int, default=4, help="largest per-system dimension")
    v.add_argument("--protocols", type=int, default=20)
    v.add_argument("--replay-dir", default=".")
    v.add_argument("--margins", action="store_true", help="include per-trial margins in the JSON")
    io_flags(v)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="run a protocol and check the converse chain on its trace")
    s.add_argument("spec", nargs="?", help="protocol spec JSON file")
    s.add_argument("--random", action="store_true")
    s.add_argument("--trivial", action="store_true", help="noiseless qubit, one use, one bit")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--M", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mixture", action="store_true", help="random spec over the erasure channel mixture")
    s.add_argument("--erasure-p", type=float, default=0.25)
    s.add_argument("--dump-states", action="store_true")
    s.add_argument("--dim-cap", type=int, default=DEFAULT_DIM_CAP)
    io_flags(s)
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        tolerances.reload(args.tol)
        return args.func(args)
    except InfeasibleConstraint as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DimensionCapExceeded, MemoryError) as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (UsageError, SpecError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
