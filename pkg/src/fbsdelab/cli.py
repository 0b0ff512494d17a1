"""Command-line surface: scenario in, CSV reports and a run manifest out.

Subcommands mirror the pipeline stages:

    validate    probe the coefficient assumptions
    pde         viscous decoupling fields, one per noise level
    limit       the boundary value problem and the inviscid field
    simulate    forward-backward ensembles and backward-equation residuals
    sweep       convergence norms against the limit across noise levels
    action      minimum-action paths to the configured terminals
    rare-event  tube probabilities and the extrapolated decay exponent
    all         everything above, in order

Exit codes: 0 success, 2 scenario/validation failure, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path as FsPath

import numpy as np

from . import __version__, kernels
from . import fbsde, ldp, limit, montecarlo, pde, validation
from .errors import FbsdeLabError, OutputError, ScenarioError
from .grids import SpatialGrid, TimeGrid
from .reporting import RunManifest, StageTimer, fmt, write_csv
from .rng import RandomSource
from .scenario import Scenario, load_scenario, parse_scenario

_ACTION_MAX_TIME_STEPS = 250
_ACTION_MAX_CELLS = 400
_FIELD_DUMP_SLICES = 50


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbsdelab",
        description="forward-backward SDE laboratory: decoupling fields, small-noise limits, large deviations",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in (
        ("validate", "probe Lipschitz/growth/ellipticity assumptions"),
        ("pde", "solve the viscous decoupling field per noise level"),
        ("limit", "solve the limit BVP and the inviscid field"),
        ("simulate", "run forward-backward ensembles"),
        ("sweep", "convergence norms against the limit"),
        ("action", "minimum-action paths"),
        ("rare-event", "tube probabilities and exponent fit"),
        ("all", "full pipeline"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--scenario", required=True, help="scenario file, bundled name, or run manifest")
        cmd.add_argument("--out", default="out", help="output directory (default: ./out)")
        cmd.add_argument("--seed", type=int, default=None, help="override the master seed")
        cmd.add_argument("--paths", type=int, default=None, help="override the path count")
        cmd.add_argument("--eps", default=None, help="override the noise levels (comma separated)")
        cmd.add_argument("--dt", type=float, default=None, help="override the time step")
        cmd.add_argument("--workers", type=int, default=1, help="worker count for ensembles")
        cmd.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    doc = scenario.raw
    changed = False
    import copy

    doc = copy.deepcopy(doc)
    if args.seed is not None:
        doc["montecarlo"]["master_seed"] = int(args.seed)
        changed = True
    if args.paths is not None:
        doc["montecarlo"]["n_paths"] = int(args.paths)
        doc["montecarlo"]["rare_event_n_paths"] = int(args.paths)
        changed = True
    if args.eps is not None:
        values = [float(v) for v in args.eps.split(",") if v.strip()]
        doc["problem"]["epsilons"] = values
        changed = True
    if args.dt is not None:
        horizon = float(doc["problem"]["T"]) - float(doc["problem"]["t0"])
        doc["grids"]["n_time_steps"] = max(1, int(round(horizon / float(args.dt))))
        changed = True
    if not changed:
        return scenario
    return parse_scenario(doc, name=scenario.name)


class Pipeline:
    """Lazily computed artifacts shared by the stages of one run."""

    def __init__(self, scenario: Scenario, out_dir: FsPath, workers: int, quiet: bool):
        self.scenario = scenario
        self.out = out_dir
        self.workers = workers
        self.quiet = quiet
        self.src = RandomSource(scenario.master_seed)
        self._fields: dict = {}
        self._limit = None
        self._action_fields: dict = {}
        self._inviscid = None
        self._ode = None
        self._minimizers: dict = {}
        self.outputs: list = []
        self.notes: list = []
        self.warnings = {"boundary_clamps": 0, "path_exits": 0}

    def say(self, text: str):
        if not self.quiet:
            print(text)

    def emit(self, path: str):
        self.outputs.append(str(FsPath(path).name))

    # -- shared artifacts ---------------------------------------------------

    def field(self, eps: float):
        if eps not in self._fields:
            self._fields[eps] = pde.solve_viscous(
                self.scenario.spec, eps, self.scenario.tgrid, self.scenario.xgrid
            )
        return self._fields[eps]

    def limit_solution(self):
        if self._limit is None:
            self._limit = limit.shoot(
                self.scenario.spec, self.scenario.tgrid, tol=self.scenario.shooting_tol
            )
        return self._limit

    def action_grids(self):
        tgrid = self.scenario.tgrid
        xgrid = self.scenario.xgrid
        if tgrid.n_steps > _ACTION_MAX_TIME_STEPS:
            tgrid = TimeGrid(tgrid.t0, tgrid.T, _ACTION_MAX_TIME_STEPS)
        if xgrid.n_cells > _ACTION_MAX_CELLS:
            xgrid = SpatialGrid(xgrid.x_min, xgrid.x_max, _ACTION_MAX_CELLS)
        return tgrid, xgrid

    def inviscid(self):
        if self._inviscid is None:
            tgrid, xgrid = self.action_grids()
            self._inviscid = limit.inviscid_field(
                self.scenario.spec, tgrid, xgrid, tol=self.scenario.shooting_tol
            )
        return self._inviscid

    def controlled_ode(self):
        if self._ode is None:
            self._ode = ldp.ControlledODE(self.scenario.spec, self.inviscid())
        return self._ode

    def action_field(self, eps: float):
        if eps not in self._action_fields:
            tgrid, xgrid = self.action_grids()
            self._action_fields[eps] = pde.solve_viscous(self.scenario.spec, eps, tgrid, xgrid)
        return self._action_fields[eps]

    def minimizer(self, terminal: float):
        if terminal not in self._minimizers:
            self._minimizers[terminal] = ldp.minimize_action(
                self.controlled_ode(), terminal, tol=self.scenario.action_tol
            )
        return self._minimizers[terminal]

    # -- stages ---------------------------------------------------------------

    def stage_validate(self) -> int:
        report = validation.validate(
            self.scenario.spec,
            probe_budget=self.scenario.probe_budget,
            box_radius=self.scenario.box_radius,
            seed=self.scenario.master_seed,
        )
        self.emit(
            write_csv(
                self.out / "validation_report.csv",
                ["L_hat", "Lambda_hat", "lambda_hat", "bounded_sigma", "bounded_h",
                 "probe_points", "n_violations"],
                [[report.L_hat, report.Lambda_hat,
                  report.lambda_hat if report.lambda_hat is not None else float("nan"),
                  report.bounded_sigma, report.bounded_h, report.probe_points,
                  len(report.violations)]],
            )
        )
        if report.violations:
            rows = [
                [tag, witness.get("t", float("nan")),
                 ";".join(fmt(v) for v in witness.get("point", [])),
                 witness.get("quotient", witness.get("eig", float("nan")))]
                for tag, witness in report.violations
            ]
            self.emit(write_csv(self.out / "violations.csv",
                                ["assumption", "t", "point", "magnitude"], rows))
        self.say(
            f"validate: L_hat={report.L_hat:.6g} Lambda_hat={report.Lambda_hat:.6g} "
            f"lambda_hat={report.lambda_hat} violations={len(report.violations)}"
        )
        if report.violations:
            raise ScenarioError(f"validation recorded {len(report.violations)} violation(s)")
        return 0

    def _dump_field(self, fld, label: str):
        stride = max(1, fld.tgrid.n_steps // _FIELD_DUMP_SLICES)
        rows = []
        t_nodes = fld.tgrid.nodes
        x_nodes = fld.xgrid.nodes
        for i in range(0, fld.tgrid.n_nodes, stride):
            for j in range(fld.xgrid.n_nodes):
                rows.append([t_nodes[i], x_nodes[j], fld.u[i, j], fld.du_dx[i, j]])
        self.emit(write_csv(self.out / f"field_{label}.csv", ["s", "x", "u", "du_dx"], rows))

    def stage_pde(self) -> int:
        for eps in self.scenario.spec.epsilons:
            fld = self.field(eps)
            self._dump_field(fld, f"eps_{float(eps):g}")
            self.say(f"pde: eps={eps} sup|u|={fld.sup_abs():.6g} sup|du|={fld.sup_abs_gradient():.6g}")
        return 0

    def stage_limit(self) -> int:
        sol = self.limit_solution()
        nodes = self.scenario.tgrid.nodes
        self.emit(
            write_csv(
                self.out / "limit_path.csv",
                ["s", "X", "Y"],
                [[nodes[m], sol.X.values[m, 0], sol.Y.values[m, 0]] for m in range(len(nodes))],
            )
        )
        self.emit(
            write_csv(
                self.out / "limit_summary.csv",
                ["u0", "residual", "iterations", "condition_estimate"],
                [[float(sol.u0[0]), sol.residual, sol.iterations, sol.condition_estimate]],
            )
        )
        self._dump_field(self.inviscid(), "eps_0")
        self.say(f"limit: u0={float(sol.u0[0]):.9g} residual={sol.residual:.3g}")
        return 0

    def stage_simulate(self) -> int:
        sol = self.limit_solution()
        rows = []
        for eps in self.scenario.spec.epsilons:
            fld = self.field(eps)
            ens = fbsde.simulate(
                self.scenario.spec, fld, eps, self.scenario.n_paths, self.src,
                workers=self.workers,
            )
            sup_x, sup_y, int_z = montecarlo.ensemble_norms(ens, sol)
            residual = fbsde.bsde_residual(ens, self.scenario.spec)
            self.warnings["path_exits"] += ens.n_exited
            self.warnings["boundary_clamps"] += fld.clamp_warnings
            rows.append(
                [eps, ens.n_paths, float(np.mean(ens.Y[:, 0])), float(np.mean(sup_x)),
                 float(np.mean(sup_y)), float(np.mean(int_z)), residual]
            )
            self.say(f"simulate: eps={eps} residual={residual:.3e}")
        self.emit(
            write_csv(
                self.out / "ensemble_summary.csv",
                ["eps", "n_paths", "mean_Y0", "E_sup_X_diff_sq", "E_sup_Y_diff_sq",
                 "E_int_Z_sq", "bsde_residual"],
                rows,
            )
        )
        return 0

    def stage_sweep(self) -> int:
        spec = self.scenario.spec
        fields = [self.field(eps) for eps in spec.epsilons]
        if not fields:
            self.emit(write_csv(self.out / "sweep.csv", _SWEEP_HEADER, []))
            self.notes.append("sweep: no rows")
            self.say("sweep: no rows")
            return 0
        report = montecarlo.convergence_sweep(
            spec, fields, self.limit_solution(), self.scenario.n_paths, self.src,
            workers=self.workers,
        )
        rows = [
            [row.eps, float(np.log(row.eps)), row.e_sup_x_sq, row.se_sup_x_sq,
             row.e_sup_y_sq, row.se_sup_y_sq, row.e_int_z_sq, row.se_int_z_sq, row.n_paths]
            for row in report.rows
        ]
        self.emit(write_csv(self.out / "sweep.csv", _SWEEP_HEADER, rows))
        self.emit(
            write_csv(
                self.out / "sweep_slopes.csv",
                ["column", "slope"],
                [[name, slope] for name, slope in sorted(report.slopes.items())],
            )
        )
        self.say("sweep: slopes " + " ".join(f"{k}={v:.3f}" for k, v in sorted(report.slopes.items())))
        return 0

    def stage_action(self) -> int:
        rows = []
        for index, terminal in enumerate(self.scenario.terminals):
            result = self.minimizer(terminal)
            rows.append([terminal, result.value, result.constraint_violation, result.converged])
            nodes = result.path.grid.nodes
            self.emit(
                write_csv(
                    self.out / f"action_path_{index}.csv",
                    ["s", "g", "phi_dot"],
                    [[nodes[m], result.path.values[m], result.control.values[m]]
                     for m in range(len(nodes))],
                )
            )
            self.say(f"action: terminal={terminal} value={result.value:.6g} converged={result.converged}")
        self.emit(
            write_csv(
                self.out / "action.csv",
                ["terminal", "rate_value", "constraint_violation", "converged"],
                rows,
            )
        )
        return 0

    def stage_rare_event(self) -> int:
        scenario = self.scenario
        reference = self.minimizer(scenario.terminals[0])
        ode = self.controlled_ode()
        predicted = ldp.predict_tube_exponent(reference.path, ode)
        fields = [self.action_field(eps) for eps in scenario.spec.epsilons]
        report = montecarlo.rare_event_report(
            scenario.spec, fields, reference.path, scenario.delta,
            scenario.rare_event_n_paths, self.src, predicted, workers=self.workers,
        )
        self.emit(
            write_csv(
                self.out / "rare_event.csv",
                ["eps", "log_eps", "p_hat", "wilson_low", "wilson_high",
                 "minus_eps_log_p", "n_paths", "usable", "delta"],
                [[row.eps, float(np.log(row.eps)), row.p_hat, row.wilson_low,
                  row.wilson_high, row.minus_eps_log_p, row.n_paths, row.usable,
                  report.delta]
                 for row in report.rows],
            )
        )
        fit = None
        try:
            fit = montecarlo.exponent_fit(report)
        except ValueError as exc:
            self.say(f"rare-event: exponent fit unavailable ({exc})")
        self.emit(
            write_csv(
                self.out / "rare_event_fit.csv",
                ["reference_terminal", "predicted_exponent", "extrapolated", "slope",
                 "agreement_ratio", "pairwise_exponent"],
                [[scenario.terminals[0], predicted,
                  fit.extrapolated if fit else float("nan"),
                  fit.slope if fit else float("nan"),
                  fit.agreement_ratio if fit else float("nan"),
                  fit.pairwise_exponent if fit else float("nan")]],
            )
        )
        if fit:
            self.say(
                f"rare-event: predicted={predicted:.6g} extrapolated={fit.extrapolated:.6g} "
                f"ratio={fit.agreement_ratio:.3f}"
            )
        return 0


_SWEEP_HEADER = [
    "eps", "log_eps", "E_sup_X_diff_sq", "se_sup_X", "E_sup_Y_diff_sq", "se_sup_Y",
    "E_int_Z_sq", "se_int_Z", "n_paths",
]

_STAGES = {
    "validate": Pipeline.stage_validate,
    "pde": Pipeline.stage_pde,
    "limit": Pipeline.stage_limit,
    "simulate": Pipeline.stage_simulate,
    "sweep": Pipeline.stage_sweep,
    "action": Pipeline.stage_action,
    "rare-event": Pipeline.stage_rare_event,
}
_ALL_ORDER = ("validate", "pde", "limit", "simulate", "sweep", "action", "rare-event")


def _write_summary(pipe: Pipeline, manifest: RunManifest):
    lines = [f"fbsdelab {__version__} run summary", f"scenario: {pipe.scenario.name}"]
    lines.extend(pipe.notes)
    for name, seconds in manifest.stage_seconds.items():
        lines.append(f"stage {name}: {seconds:.3f} s")
    lines.append(f"outputs: {', '.join(manifest.outputs) if manifest.outputs else 'none'}")
    lines.append(f"warnings: {manifest.warnings}")
    path = FsPath(pipe.out) / "summary.txt"
    path.write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        scenario = _apply_overrides(scenario, args)
        out_dir = FsPath(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        pipe = Pipeline(scenario, out_dir, max(1, args.workers), args.quiet)
        manifest = RunManifest(
            scenario_name=scenario.name,
            resolved_scenario=scenario.raw,
            tool_version=__version__,
            backend=kernels.active_backend(),
            master_seed=scenario.master_seed,
            workers=max(1, args.workers),
            subcommand=args.subcommand,
        )
        timer = StageTimer(manifest)
        stages = _ALL_ORDER if args.subcommand == "all" else (args.subcommand,)
        for name in stages:
            with timer(name):
                _STAGES[name](pipe)
        manifest.outputs = pipe.outputs
        manifest.warnings = pipe.warnings
        manifest_path = manifest.write(out_dir)
        _write_summary(pipe, manifest)
        pipe.say(f"manifest: {manifest_path}")
        return 0
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FbsdeLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
