"""Command-line front end.

::

    switchmtd synth       --scenario S --out DIR     -> DIR/structures.json
    switchmtd design      --scenario S --out DIR     -> DIR/gains.json
    switchmtd simulate    --scenario S --out DIR     -> DIR/results_<exp>.csv, DIR/events_<exp>.csv
    switchmtd analyze     --scenario S --out DIR     -> DIR/analysis_<exp>.txt, lyapunov / violation CSVs
    switchmtd report      --scenario S --out DIR     -> DIR/<exp>_*.svg
    switchmtd repro-paper [--out DIR]                -> all of the above for the bundled example

Each stage reads the previous stage's files from ``--out``.  Exit codes: 0
success, 2 unsatisfiable synthesis, 3 validation failure, 4 schema error,
5 divergence (only with ``--expect-stable``).
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, pipeline, plotting, scenario
from .errors import (
    DimensionMismatch,
    EbarNotPSD,
    EventOffGrid,
    HypothesisNotVerified,
    NoStabilizingSolution,
    NonPositiveDefiniteQ,
    NonPositiveMuMin,
    NonPositiveParameter,
    NotSymmetric,
    ScenarioError,
    SwitchMTDError,
    UnknownCatalogId,
    Unsatisfiable,
    WeightStructureMismatch,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSAT = 2
EXIT_VALIDATION = 3
EXIT_SCHEMA = 4
EXIT_DIVERGED = 5

_SCHEMA_ERRORS = (ScenarioError, UnknownCatalogId, EventOffGrid, DimensionMismatch, NotSymmetric,
                  WeightStructureMismatch, NonPositiveParameter)
_VALIDATION_ERRORS = (NoStabilizingSolution, NonPositiveDefiniteQ, NonPositiveMuMin, EbarNotPSD,
                      HypothesisNotVerified)


class StageFailed(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _log(msg):
    print(msg, file=sys.stderr)


# -- context ---------------------------------------------------------------------

class Context:
    def __init__(self, args):
        self.args = args
        path = args.scenario or scenario.bundled_path()
        self.scenario = scenario.load_scenario(path)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = self.scenario.seed if args.seed is None else args.seed

    def path(self, name):
        return self.out / name

    def structures(self):
        p = self.path("structures.json")
        if not p.exists():
            raise StageFailed(EXIT_ERROR, f"{p} not found; run `switchmtd synth` first")
        return pipeline.structures_from_dict(pipeline.read_json(p, "structures"), self.scenario.n_agents)

    def layer(self):
        return pipeline.build_layer(self.scenario, self.structures())

    def design(self, layer):
        p = self.path("gains.json")
        if not p.exists():
            raise StageFailed(EXIT_ERROR, f"{p} not found; run `switchmtd design` first")
        return pipeline.design_from_gains(self.scenario, pipeline.read_json(p, "gains"), layer)

    def experiments(self):
        names = self.args.experiment
        exps = self.scenario.experiments
        if names:
            unknown = set(names) - {e["name"] for e in exps}
            if unknown:
                raise ScenarioError(f"unknown experiment(s) {sorted(unknown)}", "--experiment")
            exps = [e for e in exps if e["name"] in names]
        return exps


# -- stages ----------------------------------------------------------------------

def run_synth(ctx):
    try:
        structures = pipeline.run_synthesis(ctx.scenario)
    except Unsatisfiable as exc:
        raise StageFailed(EXIT_UNSAT, f"unsatisfiable: {exc} [constraint={exc.constraint}, sublayer={exc.sublayer}]")
    pipeline.write_json(ctx.path("structures.json"), pipeline.structures_to_dict(structures))
    for k, st in enumerate(structures):
        edges = " ".join(f"{i + 1}-{j + 1}" for i, j in st.edge_list())
        loops = " ".join(str(i + 1) for i in st.selfloop_nodes())
        _log(f"sublayer {k + 1}: edges [{edges}] selfloops [{loops}]")
    return EXIT_OK


def run_design(ctx):
    layer = ctx.layer()
    design = pipeline.run_design(ctx.scenario, layer)
    pipeline.write_json(ctx.path("gains.json"), pipeline.gains_to_dict(design, layer))
    _log(f"mu_min = {layer.mu_min!r}")
    for k, e in enumerate(design.validation_eigs):
        _log(f"sublayer {k + 1}: smallest validation eigenvalue {e!r} ({'pass' if e > 0 else 'FAIL'})")
    if not design.passed:
        raise StageFailed(EXIT_VALIDATION, "validation failed: build a different set of sublayers or weights")
    return EXIT_OK


def _simulate_one(sc, exp, design, layer, seed, out):
    result = pipeline.run_experiment(sc, exp, design, layer, seed)
    pipeline.write_results_csv(out / f"results_{exp['name']}.csv", result)
    pipeline.write_events_csv(out / f"events_{exp['name']}.csv", result)
    return exp["name"], result.diverged, result.diverged_at


def run_simulate(ctx):
    layer = ctx.layer()
    design = ctx.design(layer)
    exps = ctx.experiments()
    jobs = max(1, ctx.args.jobs or 1)
    args = [(ctx.scenario, e, design, layer, ctx.seed, ctx.out) for e in exps]
    if jobs > 1 and len(exps) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(exps))) as pool:
            outcomes = list(pool.map(_simulate_one, *zip(*args)))
    else:
        outcomes = [_simulate_one(*a) for a in args]
    bad = []
    for (name, diverged, at), exp in zip(outcomes, exps):
        _log(f"{name}: {'diverged at t=' + repr(at) if diverged else 'finished'}")
        if diverged and exp["expect"] != "diverged":
            bad.append(name)
    if ctx.args.expect_stable and bad:
        raise StageFailed(EXIT_DIVERGED, f"divergence in {', '.join(bad)}")
    return EXIT_OK


def _load_run(ctx, exp, design, layer):
    p = ctx.path(f"results_{exp['name']}.csv")
    if not p.exists():
        raise StageFailed(EXIT_ERROR, f"{p} not found; run `switchmtd simulate` first")
    result = pipeline.read_results_csv(p, ctx.scenario.sim["h"])
    result.d = pipeline.disturbance_trace(ctx.scenario, design, layer, result, exp["disturbance"])
    last = result.norms[-1]
    result.diverged = bool(not np.isfinite(last) or last > ctx.scenario.sim["ceiling"])
    result.diverged_at = float(result.t[-1]) if result.diverged else None
    return result


def run_analyze(ctx):
    layer = ctx.layer()
    design = ctx.design(layer)
    summary = ["experiment,expect,verdict,tail_sup,ultimate_bound,envelope_ratio,decay_checked,decay_violations"]
    mismatched = []
    for exp in ctx.experiments():
        result = _load_run(ctx, exp, design, layer)
        rep = analysis.analyze(result, design, layer, tolerance=ctx.args.tolerance)
        name = exp["name"]
        lines = [f"experiment: {name}", f"expected: {exp['expect']}"] + list(rep.summary_lines())
        ctx.path(f"analysis_{name}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        pipeline.write_series_csv(ctx.path(f"lyapunov_{name}.csv"), ["t", "V"], [result.t, rep.lyapunov_trace])
        viol = np.array(rep.decay_violations).reshape(-1, 2)
        pipeline.write_series_csv(ctx.path(f"violations_{name}.csv"), ["t", "margin"], [viol[:, 0], viol[:, 1]])
        summary.append(",".join([
            name, exp["expect"], rep.verdict, repr(rep.tail_sup), repr(rep.ultimate_bound),
            repr(rep.envelope_ratio), str(rep.decay_checked), str(len(rep.decay_violations)),
        ]))
        _log(f"{name}: verdict {rep.verdict} (expected {exp['expect']}), "
             f"{len(rep.decay_violations)} decay violations over {rep.decay_checked} points")
        if exp["expect"] != "any" and rep.verdict != exp["expect"]:
            mismatched.append(name)
    ctx.path("analysis_summary.csv").write_text("\n".join(summary) + "\n", encoding="utf-8")
    if mismatched:
        _log(f"verdict differs from the expectation for: {', '.join(mismatched)}")
    return EXIT_OK


def run_report(ctx):
    layer = ctx.layer()
    design = ctx.design(layer)
    Qv = analysis.common_decay_matrix(design, layer)
    kappa, sigma = analysis.exponential_constants(design.Pbar, Qv)
    gain = analysis.iss_gain(design.Pbar, Qv, design.gamma_d)
    written = []
    for exp in ctx.experiments():
        result = _load_run(ctx, exp, design, layer)
        name = exp["name"]
        d_sup = float(np.max(np.linalg.norm(result.d, axis=1)))
        bound = gain * d_sup if exp["disturbance"] else None
        written.append(plotting.plot_norms(result, ctx.path(f"{name}_norm.svg"), f"{name}: state norm",
                                           ceiling=ctx.scenario.sim["ceiling"], bound=bound))
        written.append(plotting.plot_states(result, ctx.path(f"{name}_states.svg"), f"{name}: agent states"))
        written.append(plotting.plot_sigma(result, ctx.path(f"{name}_sigma.svg"), f"{name}: switching signal"))
        V = analysis.lyapunov_trace(result, design.Pbar)
        written.append(plotting.plot_lyapunov(result.t, V, ctx.path(f"{name}_lyapunov.svg"), f"{name}: V(t)"))
        if not exp["disturbance"] and not result.attack_active.any():
            written.append(plotting.plot_envelope(result, kappa, sigma, ctx.path(f"{name}_envelope.svg"),
                                                  f"{name}: exponential envelope"))
    for p in written:
        _log(f"wrote {p}")
    return EXIT_OK


def run_repro(ctx):
    for stage in (run_synth, run_design, run_simulate, run_analyze, run_report):
        code = stage(ctx)
        if code:
            return code
    return EXIT_OK


COMMANDS = {
    "synth": (run_synth, "generate edge-disjoint sublayer structures"),
    "design": (run_design, "design gains and run the validation test"),
    "simulate": (run_simulate, "simulate every experiment of the scenario"),
    "analyze": (run_analyze, "Lyapunov / ISS diagnostics for simulated runs"),
    "report": (run_report, "render SVG figures for simulated runs"),
    "repro-paper": (run_repro, "run the whole pipeline on the bundled example"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON (default: the bundled example)")
    common.add_argument("--out", default="out", help="artifact directory (default: ./out)")
    common.add_argument("--seed", type=int, help="seed for random switching schedules (default: scenario seed)")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers across experiments")
    common.add_argument("--tolerance", type=float, help="absolute decay-check tolerance (default 1e-6 * max V)")
    common.add_argument("--expect-stable", action="store_true",
                        help="exit 5 if an experiment not marked 'diverged' hits the ceiling")
    common.add_argument("--experiment", action="append", help="restrict to the named experiment (repeatable)")
    parser = argparse.ArgumentParser(prog="switchmtd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        _log("--seed must be an unsigned 64-bit integer")
        return EXIT_SCHEMA
    try:
        ctx = Context(args)
        return COMMANDS[args.command][0](ctx)
    except StageFailed as exc:
        _log(str(exc))
        return exc.code
    except _SCHEMA_ERRORS as exc:
        _log(f"schema error: {exc}")
        return EXIT_SCHEMA
    except _VALIDATION_ERRORS as exc:
        _log(f"validation failed: {exc}")
        return EXIT_VALIDATION
    except Unsatisfiable as exc:
        _log(f"unsatisfiable: {exc}")
        return EXIT_UNSAT
    except SwitchMTDError as exc:
        _log(f"error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
