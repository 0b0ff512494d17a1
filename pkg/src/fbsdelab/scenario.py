"""Scenario files: the JSON surface describing one experiment end to end.

A scenario bundles the problem instance (dimensions, horizon, coefficients,
noise levels), the discretisation grids, Monte-Carlo settings, the
action/rare-event targets and the validation probe configuration.  The
schema is checked strictly before any computation: unknown keys anywhere
are rejected, so typos fail loudly instead of silently running defaults.

The catalog bundled with the package (heat_affine, burgers_linear,
schilder, damped_coupling) doubles as the acceptance-suite fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path as FsPath

from .errors import ScenarioError
from .grids import SpatialGrid, TimeGrid
from .problem import ProblemSpec

BUNDLED = ("heat_affine", "burgers_linear", "schilder", "damped_coupling")

_SCHEMA = {
    "problem": {"d", "k", "t0", "T", "x0", "epsilons"},
    "coefficients": {"f", "g", "sigma", "h"},
    "grids": {"n_time_steps", "x_min", "x_max", "n_cells"},
    "montecarlo": {"n_paths", "rare_event_n_paths", "master_seed"},
    "ldp": {"terminal", "delta", "tolerances"},
    "validation": {"probe_budget", "box_radius"},
}
_TOLERANCE_KEYS = {"shooting", "picard", "action"}


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    spec: ProblemSpec
    tgrid: TimeGrid
    xgrid: SpatialGrid
    n_paths: int
    rare_event_n_paths: int
    master_seed: int
    terminals: tuple
    delta: float
    tolerances: dict
    probe_budget: int
    box_radius: float
    raw: dict  # the resolved document, embedded into manifests

    @property
    def shooting_tol(self) -> float:
        return self.tolerances["shooting"]

    @property
    def picard_tol(self) -> float:
        return self.tolerances["picard"]

    @property
    def action_tol(self) -> float:
        return self.tolerances["action"]


def _require_sections(doc: dict):
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ScenarioError(f"unknown top-level scenario keys: {sorted(unknown)}")
    missing = set(_SCHEMA) - set(doc)
    if missing:
        raise ScenarioError(f"missing scenario sections: {sorted(missing)}")
    for section, keys in _SCHEMA.items():
        body = doc[section]
        if not isinstance(body, dict):
            raise ScenarioError(f"scenario section {section!r} must be an object")
        unknown = set(body) - keys
        if unknown:
            raise ScenarioError(f"unknown keys in {section!r}: {sorted(unknown)}")
        missing = keys - set(body)
        if missing:
            raise ScenarioError(f"missing keys in {section!r}: {sorted(missing)}")
    tol = doc["ldp"]["tolerances"]
    if not isinstance(tol, dict) or set(tol) != _TOLERANCE_KEYS:
        raise ScenarioError(f"ldp.tolerances must have exactly the keys {sorted(_TOLERANCE_KEYS)}")


def parse_scenario(doc: dict, name: str = "<inline>") -> Scenario:
    """Validate a scenario document and build the typed configuration."""
    _require_sections(doc)
    problem = doc["problem"]
    coeffs = doc["coefficients"]
    grids = doc["grids"]
    mc = doc["montecarlo"]
    ldp = doc["ldp"]
    val = doc["validation"]
    try:
        spec = ProblemSpec.from_text(
            d=int(problem["d"]),
            k=int(problem["k"]),
            t0=float(problem["t0"]),
            T=float(problem["T"]),
            x0=[float(v) for v in problem["x0"]],
            epsilons=[float(e) for e in problem["epsilons"]],
            f=coeffs["f"],
            g=coeffs["g"],
            sigma=coeffs["sigma"],
            h=coeffs["h"],
        )
        tgrid = TimeGrid(spec.t0, spec.T, int(grids["n_time_steps"]))
        xgrid = SpatialGrid(float(grids["x_min"]), float(grids["x_max"]), int(grids["n_cells"]))
        terminals = ldp["terminal"]
        if not isinstance(terminals, (list, tuple)):
            terminals = [terminals]
        scenario = Scenario(
            name=name,
            spec=spec,
            tgrid=tgrid,
            xgrid=xgrid,
            n_paths=int(mc["n_paths"]),
            rare_event_n_paths=int(mc["rare_event_n_paths"]),
            master_seed=int(mc["master_seed"]),
            terminals=tuple(float(v) for v in terminals),
            delta=float(ldp["delta"]),
            tolerances={key: float(ldp["tolerances"][key]) for key in _TOLERANCE_KEYS},
            probe_budget=int(val["probe_budget"]),
            box_radius=float(val["box_radius"]),
            raw=doc,
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario value: {exc}") from exc
    if spec.d == 1 and not xgrid.contains_with_margin(float(spec.x0[0])):
        raise ScenarioError("x0 must sit inside the spatial grid with a 20% margin")
    if scenario.n_paths < 1 or scenario.rare_event_n_paths < 1:
        raise ScenarioError("path counts must be positive")
    if scenario.delta < 0:
        raise ScenarioError("ldp.delta must be >= 0")
    return scenario


def load_scenario(source: str) -> Scenario:
    """Load a scenario from a file path, a bundled name, or a run manifest."""
    path = FsPath(source)
    if path.exists():
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{source}: not valid JSON ({exc})") from exc
        if "resolved_scenario" in doc:  # run manifest: re-run its scenario
            return parse_scenario(doc["resolved_scenario"], name=doc.get("scenario_name", path.stem))
        return parse_scenario(doc, name=path.stem)
    if source in BUNDLED:
        text = resources.files("fbsdelab").joinpath(f"scenarios/{source}.json").read_text()
        return parse_scenario(json.loads(text), name=source)
    raise ScenarioError(
        f"scenario {source!r} is neither a file nor a bundled name {BUNDLED}"
    )
