"""Seeded experiment sweeps over the scenario knobs, one frame per cell.

A sweep cell is (axis value, mode, seed).  Every cell draws its own channel
realization, plans the proposed frame, reuses the proposed transmission
period for the benchmark modes (equal channel time), runs the frame, and
reports throughput, fairness, and contention counters.  Cells are
independent, so parallel execution cannot change the results.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from . import channel as chan
from . import simulator as sim
from .optimizer import joint_optimize
from .scenario import (
    Scenario,
    build_population,
    build_ris_inventory,
    with_per_user_static_budget,
)

RESULT_COLUMNS = (
    "axis",
    "value",
    "mode",
    "seeds",
    "s_s_bps",
    "s_c_bps",
    "s_o_bps",
    "s_o_std_bps",
    "s_o_analytic_bps",
    "served_static",
    "served_mobile",
    "served_new",
    "collisions",
    "n_r_measured",
    "n_r_analytic",
    "beta_alpha",
)

SWEEP_AXES = ("users", "ratio", "ris", "elements", "beta-alpha", "point")


class SweepSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple

    def __str__(self) -> str:
        vals = ",".join(str(v) for v in self.values)
        return "%s=%s" % (self.axis, vals)


def parse_sweep(spec: str) -> SweepSpec:
    """Parse an axis spec.

    users=50:200:25       integer range, inclusive of the stop when hit
    ratio=6:3:1,5:4:1     list of static:mobile:new triples
    ris=1:4:1             integer range over surface count
    elements=32:128:32    integer range over per-surface elements
    beta-alpha=0.6:1.4:0.2  multipliers applied to the optimal split
    point                  single cell at the template scenario
    """
    spec = spec.strip()
    if spec == "point":
        return SweepSpec(axis="point", values=(0,))
    if "=" not in spec:
        raise SweepSpecError("sweep spec needs axis=values, got %r" % spec)
    axis, _, rest = spec.partition("=")
    axis = axis.strip()
    if axis not in SWEEP_AXES:
        raise SweepSpecError("unknown sweep axis %r (want one of %s)" % (axis, ", ".join(SWEEP_AXES)))
    if axis == "ratio":
        values = []
        for part in rest.split(","):
            nums = tuple(float(x) for x in part.strip().split(":"))
            if len(nums) != 3:
                raise SweepSpecError("ratio entries are s:m:n triples, got %r" % part)
            values.append(nums)
        return SweepSpec(axis=axis, values=tuple(values))
    if "," in rest:
        nums = tuple(float(x) for x in rest.split(","))
    else:
        parts = [float(x) for x in rest.split(":")]
        if len(parts) != 3:
            raise SweepSpecError("range specs are start:stop:step, got %r" % rest)
        start, stop, step = parts
        if step <= 0:
            raise SweepSpecError("step must be > 0")
        nums = []
        v = start
        while v <= stop + 1e-9:
            nums.append(round(v, 10))
            v += step
        nums = tuple(nums)
    if axis in ("users", "ris", "elements"):
        nums = tuple(int(v) for v in nums)
    return SweepSpec(axis=axis, values=nums)


def scenario_for_value(template: Scenario, axis: str, value) -> tuple:
    """Materialize the sweep point; returns (scenario, beta_alpha_override)."""
    if axis == "point":
        return template, None
    if axis == "beta-alpha":
        return template, float(value)
    if axis == "users":
        pop = build_population(
            int(value), area_side_m=template.area_side_m, seed=template.seed
        )
        radio = with_per_user_static_budget(template.radio, pop.num_static)
        return replace(template, population=pop, radio=radio), None
    if axis == "ratio":
        pop = build_population(
            template.population.num_total,
            ratio=tuple(value),
            area_side_m=template.area_side_m,
            seed=template.seed,
        )
        radio = with_per_user_static_budget(template.radio, pop.num_static)
        return replace(template, population=pop, radio=radio), None
    if axis == "ris":
        inv = build_ris_inventory(
            int(value),
            template.ris.elements_per_ris,
            template.radio.num_subchannels,
            template.area_side_m,
        )
        return replace(template, ris=inv), None
    if axis == "elements":
        inv = build_ris_inventory(
            template.ris.num_ris,
            int(value),
            template.radio.num_subchannels,
            template.area_side_m,
        )
        return replace(template, ris=inv), None
    raise SweepSpecError("unknown axis %r" % axis)


def run_cell(scenario: Scenario, mode: str, seed: int, beta_alpha=None) -> dict:
    """One (scenario, mode, seed) frame; returns the per-cell measurements."""
    channels = chan.draw_channels(scenario, seed)
    plan = joint_optimize(scenario, channels, beta_alpha_override=beta_alpha)
    if mode == "proposed":
        frame, alloc = plan.frame, plan.allocation
    elif mode == "scheme1":
        frame, alloc = sim.plan_scheme1(scenario, channels, plan.frame.t2_s)
    elif mode == "scheme2":
        frame, alloc = sim.plan_scheme2(scenario, plan.frame.t2_s)
    else:
        raise sim.ModeMismatchError("unknown mode %r" % mode)
    trace = sim.run_frame(scenario, channels, frame, alloc, mode, seed)
    fairness = sim.measure_fairness([trace])
    ratio = frame.beta / frame.alpha if frame.alpha > 0 else float("inf")
    return {
        "mode": mode,
        "seed": seed,
        "s_s_bps": trace.throughput_scheduled_bps,
        "s_c_bps": trace.throughput_contended_bps,
        "s_o_bps": trace.throughput_overall_bps,
        "s_o_analytic_bps": plan.throughput_overall_bps if mode == "proposed" else float("nan"),
        "served_static": fairness["static"],
        "served_mobile": fairness["mobile"],
        "served_new": fairness["new"],
        "collisions": trace.collisions,
        "n_r_measured": trace.n_r_measured,
        "n_r_analytic": plan.cascade.n_r,
        "beta_alpha": ratio,
    }


def _cell_job(args):
    template_dict, axis, value, mode, seed = args
    from .scenario import scenario_from_dict

    template = scenario_from_dict(template_dict)
    scenario, override = scenario_for_value(template, axis, value)
    return (axis, value, mode, seed, run_cell(scenario, mode, seed, beta_alpha=override))


def _mean(xs):
    xs = list(xs)
    return sum(xs) / len(xs) if xs else 0.0


def _std(xs):
    xs = list(xs)
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return (sum((x - m) ** 2 for x in xs) / (len(xs) - 1)) ** 0.5


def max_workers() -> int:
    raw = os.environ.get("RIS_MAC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_experiment(template: Scenario, sweep: SweepSpec, seeds, modes=("proposed",)) -> list:
    """Sweep x mode x seed grid; returns aggregated rows (stable order)."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    jobs = [
        (template.to_dict(), sweep.axis, value, mode, seed)
        for value in sweep.values
        for mode in modes
        for seed in seeds
    ]
    workers = max_workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell_job, jobs))
    else:
        outcomes = [_cell_job(j) for j in jobs]

    grouped: dict = {}
    for axis, value, mode, seed, cell in outcomes:
        grouped.setdefault((value, mode), []).append(cell)

    rows = []
    for value in sweep.values:
        for mode in modes:
            cells = grouped.get((value, mode), [])
            if not cells:
                continue
            value_repr = (
                ":".join(str(int(v)) if float(v).is_integer() else str(v) for v in value)
                if isinstance(value, tuple)
                else value
            )
            rows.append(
                {
                    "axis": sweep.axis,
                    "value": value_repr,
                    "mode": mode,
                    "seeds": len(cells),
                    "s_s_bps": _mean(c["s_s_bps"] for c in cells),
                    "s_c_bps": _mean(c["s_c_bps"] for c in cells),
                    "s_o_bps": _mean(c["s_o_bps"] for c in cells),
                    "s_o_std_bps": _std(c["s_o_bps"] for c in cells),
                    "s_o_analytic_bps": _mean(c["s_o_analytic_bps"] for c in cells),
                    "served_static": _mean(c["served_static"] for c in cells),
                    "served_mobile": _mean(c["served_mobile"] for c in cells),
                    "served_new": _mean(c["served_new"] for c in cells),
                    "collisions": _mean(c["collisions"] for c in cells),
                    "n_r_measured": _mean(c["n_r_measured"] for c in cells),
                    "n_r_analytic": _mean(c["n_r_analytic"] for c in cells),
                    "beta_alpha": _mean(c["beta_alpha"] for c in cells),
                }
            )
    return rows


FIGURE_PRESETS = {
    # throughput vs user count, all three MAC modes
    "fig5": {
        "sweep": "users=50:200:25",
        "modes": ("proposed", "scheme1", "scheme2"),
        "x": "value (total users)",
        "y": "s_o_bps",
    },
    # throughput vs the scheduled/contended split, one curve per class mix
    "fig6": {
        "sweep": "beta-alpha-rel=0.6:1.8:0.2",
        "ratios": ((6, 3, 1), (5, 4, 1), (3, 6, 1)),
        "x": "beta_alpha",
        "y": "s_o_bps",
    },
    # throughput vs surface count
    "fig7": {
        "sweep": "ris=1:4:1",
        "modes": ("proposed", "scheme1", "scheme2"),
        "x": "value (surfaces)",
        "y": "s_o_bps",
    },
    # throughput vs surface count, one curve per class mix (proposed only)
    "fig8": {
        "sweep": "ris=1:4:1",
        "ratios": ((6, 3, 1), (5, 4, 1), (3, 6, 1)),
        "x": "value (surfaces)",
        "y": "s_o_bps",
    },
    # served fraction per class mix, all three modes
    "fig9": {
        "sweep": "ratio=5:4:1,5:3:2,5:2:3",
        "modes": ("proposed", "scheme1", "scheme2"),
        "x": "value (ratio)",
        "y": "served_static/served_mobile/served_new",
    },
    # served fraction vs the split, one curve per class mix
    "fig10": {
        "sweep": "beta-alpha-rel=0.6:1.4:0.2",
        "ratios": ((6, 3, 1), (5, 4, 1), (3, 6, 1)),
        "x": "beta_alpha",
        "y": "served fraction (all classes)",
    },
}


def run_figure(name: str, template: Scenario, seeds) -> list:
    """Reproduce one of the six reference figures as a tidy result table."""
    if name not in FIGURE_PRESETS:
        raise SweepSpecError("unknown figure %r (want fig5..fig10)" % name)
    preset = FIGURE_PRESETS[name]
    rows = []
    if "ratios" in preset:
        rel = parse_sweep(preset["sweep"].replace("beta-alpha-rel", "beta-alpha"))
        for ratio in preset["ratios"]:
            scen, _ = scenario_for_value(template, "ratio", ratio)
            if rel.axis == "beta-alpha":
                base = _optimal_beta_alpha(scen)
                sweep = SweepSpec(
                    axis="beta-alpha",
                    values=tuple(round(base * m, 12) for m in rel.values),
                )
            else:
                sweep = rel
            for row in run_experiment(scen, sweep, seeds, modes=("proposed",)):
                row["ratio"] = ":".join(str(x) for x in ratio)
                rows.append(row)
    else:
        sweep = parse_sweep(preset["sweep"])
        rows = run_experiment(template, sweep, seeds, modes=preset["modes"])
    return rows


def _optimal_beta_alpha(scenario: Scenario) -> float:
    from . import dcf as dcfmod
    from .scenario import classify_users

    static_ids, mobile_ids = classify_users(scenario.population)
    c = scenario.radio.num_subchannels
    cascade = dcfmod.contention_cascade(len(mobile_ids), c, scenario.dcf)
    j = -(-len(static_ids) // c)
    if j == 0:
        return float("inf")
    return cascade.required_beta_t2_s / (j * scenario.dcf.data_slot_s)
