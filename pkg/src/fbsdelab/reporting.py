"""Deterministic CSV and manifest emission.

Floats are printed with 17 significant digits so every value round-trips
exactly; identical runs therefore produce byte-identical CSV files.  The
run manifest embeds the resolved scenario, which makes any manifest usable
as a scenario input for an exact re-run.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from .errors import OutputError


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path, header, rows) -> str:
    """Write rows (iterables of cells) under a header; returns the path."""
    path = FsPath(path)
    try:
        with path.open("w", newline="") as handle:
            handle.write(",".join(header) + "\n")
            for row in rows:
                handle.write(",".join(fmt(cell) for cell in row) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return str(path)


@dataclass
class RunManifest:
    scenario_name: str
    resolved_scenario: dict
    tool_version: str
    backend: str
    master_seed: int
    workers: int
    subcommand: str
    stage_seconds: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    warnings: dict = field(default_factory=lambda: {"boundary_clamps": 0, "path_exits": 0})

    def write(self, out_dir) -> str:
        path = FsPath(out_dir) / "run_manifest.json"
        doc = {
            "scenario_name": self.scenario_name,
            "resolved_scenario": self.resolved_scenario,
            "tool_version": self.tool_version,
            "backend": self.backend,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "subcommand": self.subcommand,
            "stage_seconds": self.stage_seconds,
            "outputs": sorted(self.outputs),
            "warnings": self.warnings,
        }
        try:
            path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from exc
        return str(path)


class StageTimer:
    def __init__(self, manifest: RunManifest):
        self.manifest = manifest

    def __call__(self, name: str):
        return _Timing(self.manifest, name)


class _Timing:
    def __init__(self, manifest, name):
        self.manifest = manifest
        self.name = name

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.stage_seconds[self.name] = time.perf_counter() - self.start
        return False


def summary_lines(title: str, pairs) -> str:
    lines = [title]
    for key, value in pairs:
        lines.append(f"  {key}: {fmt(value)}")
    return "\n".join(lines)
