"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 scenario validation failure,
3 infeasible optimization, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import channel as chan
from . import dcf as dcfmod
from . import experiments as exp
from . import io as rio
from . import simulator as sim
from .optimizer import InfeasibleError, joint_optimize
from .scenario import (
    DcfParams,
    default_scenario,
    load_scenario,
    validate_scenario,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print("error: %s" % message, file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> _Parser:
    p = _Parser(prog="ris-mac", description=__doc__)
    sub = p.add_subparsers(dest="command")

    def add_scenario_args(sp):
        sp.add_argument("--scenario", help="scenario file (JSON); defaults to the reference network")
        sp.add_argument("--seed", type=int, default=None, help="override the embedded seed")

    sp = sub.add_parser("validate", help="check a scenario file's invariants")
    add_scenario_args(sp)

    sp = sub.add_parser("optimize", help="solve frame timing, power, assignment, and phases")
    add_scenario_args(sp)
    sp.add_argument("--replay-channels", help="reuse a dumped channel realization")
    sp.add_argument("--dump-channels", help="persist the drawn realization for replay")
    sp.add_argument("--out", help="write the result as JSON")

    sp = sub.add_parser("dcf-table", help="print the contention cascade as CSV")
    sp.add_argument("--contenders", type=int, required=True)
    sp.add_argument("--channels", type=int, required=True)
    sp.add_argument("--w-min", type=int, default=15)
    sp.add_argument("--max-stage", type=int, default=6)

    sp = sub.add_parser("simulate", help="run Monte-Carlo frames for one mode")
    add_scenario_args(sp)
    sp.add_argument("--mode", choices=sim.MODES, default="proposed")
    sp.add_argument("--frames", type=int, default=1)
    sp.add_argument(
        "--csi-best-channel", action="store_true",
        help="contenders pick their best-rate subchannel instead of a uniform idle one",
    )
    sp.add_argument("--out", help="write per-frame rows as CSV")

    sp = sub.add_parser("experiment", help="seeded sweep over a scenario knob")
    add_scenario_args(sp)
    sp.add_argument("--sweep", required=True, help="e.g. users=50:200:25")
    sp.add_argument("--modes", default="proposed", help="comma list of modes")
    sp.add_argument("--seeds", default="1", help="comma list or count:base")
    sp.add_argument("--out", default="results.csv")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("report", help="emit the tidy table behind one reference figure")
    add_scenario_args(sp)
    sp.add_argument("--figure", required=True, choices=sorted(exp.FIGURE_PRESETS))
    sp.add_argument("--seeds", default="1,2,3")
    sp.add_argument("--out", default=None)
    return p


def parse_seeds(spec: str) -> list:
    spec = spec.strip()
    if ":" in spec:
        count, base = spec.split(":")
        return [int(base) + i for i in range(int(count))]
    return [int(x) for x in spec.split(",") if x.strip()]


def _load(args):
    if args.scenario:
        s = load_scenario(args.scenario, seed_override=args.seed)
    else:
        s = default_scenario(seed=args.seed if args.seed is not None else 1)
    return s


def cmd_validate(args) -> int:
    s = _load(args)
    report = validate_scenario(s)
    print(report)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_optimize(args) -> int:
    s = _load(args)
    report = validate_scenario(s)
    if not report.ok:
        print(report, file=sys.stderr)
        return EXIT_VALIDATION
    if args.replay_channels:
        channels = chan.replay_channels(args.replay_channels)
    else:
        channels = chan.draw_channels(s, s.seed)
    if args.dump_channels:
        chan.dump_channels(channels, args.dump_channels)
    result = joint_optimize(s, channels)
    payload = {
        "frame": {
            "t0_s": result.frame.t0_s,
            "t1_s": result.frame.t1_s,
            "t2_s": result.frame.t2_s,
            "alpha": result.frame.alpha,
            "beta": result.frame.beta,
            "num_slots": result.frame.num_slots,
            "data_slot_s": result.frame.data_slot_s,
        },
        "throughput_bps": {
            "scheduled": result.throughput_scheduled_bps,
            "contended": result.throughput_contended_bps,
            "overall": result.throughput_overall_bps,
            "overall_onefactor": result.throughput_overall_onefactor_bps,
            "onefactor_mismatch_rel": result.onefactor_mismatch_rel,
        },
        "contention": {
            "rounds": result.cascade.n_r,
            "handshake_s": result.cascade.t_r_s,
            "required_contended_s": result.cascade.required_beta_t2_s,
            "starvation_guard_fired": result.cascade.starvation_guard_fired,
        },
        "complexity": {
            "mac_ops": result.complexity.mac_ops,
            "centralized_ops": result.complexity.centralized_ops,
            "distributed_ops": result.complexity.distributed_ops,
            "delta_ops": result.complexity.delta_ops,
            "improvement_ratio": result.complexity.improvement_ratio,
        },
        "assignment": {
            "ris_of_user": result.allocation.ris_of_user.tolist(),
            "slot_of_user": result.allocation.slot_of_user.tolist(),
            "rho_sq_w": result.allocation.rho_sq_w.tolist(),
        },
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_dcf_table(args) -> int:
    dcf = DcfParams(
        w_min=args.w_min,
        w_max=args.w_min * 2**args.max_stage,
        max_backoff_stage=args.max_stage,
    )
    rows = dcfmod.cascade_table(args.contenders, args.channels, dcf)
    cols = ("round", "contenders", "tau", "collision_prob",
            "channel_success_prob", "cumulative_served")
    print(",".join(cols))
    for row in rows:
        print(",".join(rio.format_value(row[c]) for c in cols))
    return EXIT_OK


def cmd_simulate(args) -> int:
    s = _load(args)
    report = validate_scenario(s)
    if not report.ok:
        print(report, file=sys.stderr)
        return EXIT_VALIDATION
    import dataclasses

    from .scenario import advance_frame

    rows = []
    scen = s
    if args.csi_best_channel and not scen.csi_best_channel:
        scen = dataclasses.replace(scen, csi_best_channel=True)
    for i in range(args.frames):
        seed = s.seed + i
        rows.append(exp.run_cell(scen, args.mode, seed))
        rows[-1]["frame"] = i
        if i + 1 < args.frames:
            # this frame's arrivals join the existing set for the next frame
            pop = advance_frame(scen.population, scen.area_side_m, seed + 7919)
            scen = dataclasses.replace(scen, population=pop)
    cols = ("frame", "mode", "seed", "s_s_bps", "s_c_bps", "s_o_bps",
            "served_static", "served_mobile", "served_new", "collisions",
            "n_r_measured", "n_r_analytic", "beta_alpha")
    if args.out:
        rio.write_table(rows, cols, args.out, fmt="csv")
        rio.write_manifest(
            args.out + ".manifest.json", args.scenario,
            [s.seed + i for i in range(args.frames)], None, [args.out],
        )
        print("wrote %s (%d frames)" % (args.out, len(rows)))
    else:
        print(",".join(cols))
        for row in rows:
            print(",".join(rio.format_value(row[c]) for c in cols))
    return EXIT_OK


def cmd_experiment(args) -> int:
    s = _load(args)
    report = validate_scenario(s)
    if not report.ok:
        print(report, file=sys.stderr)
        return EXIT_VALIDATION
    sweep = exp.parse_sweep(args.sweep)
    seeds = parse_seeds(args.seeds)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    rows = exp.run_experiment(s, sweep, seeds, modes=modes)
    rio.write_table(rows, exp.RESULT_COLUMNS, args.out, fmt=args.format)
    manifest_path = args.out + ".manifest.json"
    rio.write_manifest(manifest_path, args.scenario, seeds, sweep, [args.out])
    print("wrote %s and %s" % (args.out, manifest_path))
    return EXIT_OK


def cmd_report(args) -> int:
    s = _load(args)
    seeds = parse_seeds(args.seeds)
    rows = exp.run_figure(args.figure, s, seeds)
    out = args.out or ("%s.csv" % args.figure)
    cols = list(exp.RESULT_COLUMNS) + (["ratio"] if any("ratio" in r for r in rows) else [])
    rio.write_table(rows, cols, out, fmt="csv")
    manifest_path = out + ".manifest.json"
    rio.write_manifest(manifest_path, args.scenario, seeds, args.figure, [out])
    print("wrote %s and %s" % (out, manifest_path))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "optimize": cmd_optimize,
    "dcf-table": cmd_dcf_table,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as e:
        print("infeasible: %s" % e, file=sys.stderr)
        return EXIT_INFEASIBLE
    except (exp.SweepSpecError, ValueError) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_USAGE if isinstance(e, exp.SweepSpecError) else EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001
        print("runtime error: %s" % e, file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
