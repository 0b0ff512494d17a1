"""Numerical probing of the structural assumptions on the coefficients.

The solvers downstream need the coefficients to be Lipschitz with linear
growth and the diffusion matrix to be uniformly elliptic.  Those are global
statements that cannot be proven from expression text, so we sample: pairs
of points drawn from a low-discrepancy sequence in a box around the origin
give empirical Lipschitz and growth constants, and Rayleigh quotients of
sigma*sigma^T give an empirical ellipticity constant.  The probe is
deterministic given its seed, and a bigger budget extends (never reshuffles)
the sample, so probed constants grow monotonically with the budget.

The report never raises: pathological samples are recorded as violations
and it is up to callers to refuse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .problem import ProblemSpec
from .program import eval_program, n_variables

LIPSCHITZ_CAP_DEFAULT = 1e4


@dataclass(frozen=True)
class ValidationReport:
    L_hat: float
    Lambda_hat: float
    lambda_hat: float | None
    bounded_sigma: bool
    bounded_h: bool
    probe_points: int
    violations: list = field(default_factory=list)
    per_function: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations


def _block_slices(d, k):
    return {"x": (1, 1 + d), "y": (1 + d, 1 + d + k), "z": (1 + d + k, 1 + d + k + k * d)}


_FAMILIES = {
    # coefficient family -> (blocks entering the Lipschitz bound, uses t)
    "f": (("x", "y"), True),
    "g": (("x", "y", "z"), True),
    "sigma": (("x", "y"), True),
    "h": (("x",), False),
}


def _eval_family(spec, family, values):
    progs = spec.programs[family]
    if family == "sigma":
        flat = [p for row in progs for p in row]
    else:
        flat = list(progs)
    shape = np.shape(values[0])
    with np.errstate(all="ignore"):
        out = np.stack(
            [np.broadcast_to(eval_program(p, values), shape) for p in flat], axis=-1
        )
    return out  # (n_samples, n_components)


def validate(
    spec: ProblemSpec,
    probe_budget: int = 10000,
    box_radius: float = 5.0,
    seed: int = 0,
    lipschitz_cap: float = LIPSCHITZ_CAP_DEFAULT,
) -> ValidationReport:
    """Probe the Lipschitz / growth / ellipticity constants of a spec."""
    if probe_budget < 100:
        raise ValueError("probe_budget must be >= 100")
    d, k = spec.d, spec.k
    nv = n_variables(d, k)
    n_coords = d + k + k * d
    sampler = qmc.Halton(d=1 + 2 * n_coords, scramble=True, seed=seed)
    raw = sampler.random(probe_budget)
    t = spec.t0 + raw[:, 0] * (spec.T - spec.t0)
    pts = box_radius * (2.0 * raw[:, 1 : 1 + n_coords] - 1.0)
    alt = box_radius * (2.0 * raw[:, 1 + n_coords :] - 1.0)

    blocks = _block_slices(d, k)
    base_values = [0.0] * nv
    base_values[0] = t
    for j in range(n_coords):
        base_values[1 + j] = pts[:, j]

    violations: list = []
    per_function: dict = {}
    L_hat = 0.0
    Lambda_hat = 0.0

    for family, (use_blocks, _uses_t) in _FAMILIES.items():
        f0 = _eval_family(spec, family, base_values)
        finite0 = np.all(np.isfinite(f0), axis=-1)
        _record_domain_violations(violations, family, finite0, t, pts)

        # growth constant: |F| / (1 + sum of block norms)
        denom = np.ones(probe_budget)
        for block in use_blocks:
            lo, hi = blocks[block]
            denom = denom + np.linalg.norm(pts[:, lo - 1 : hi - 1], axis=1)
        growth = np.linalg.norm(f0, axis=-1) / denom
        growth_hat = float(np.max(growth[finite0], initial=0.0))
        Lambda_hat = max(Lambda_hat, growth_hat)

        # Lipschitz constant per argument block (pair differs in one block only)
        fam_L = 0.0
        for block in use_blocks:
            lo, hi = blocks[block]
            values = list(base_values)
            for j in range(lo - 1, hi - 1):
                values[1 + j] = alt[:, j]
            f1 = _eval_family(spec, family, values)
            finite = finite0 & np.all(np.isfinite(f1), axis=-1)
            delta = np.linalg.norm(pts[:, lo - 1 : hi - 1] - alt[:, lo - 1 : hi - 1], axis=1)
            keep = finite & (delta > 1e-12)
            quot = np.linalg.norm(f1 - f0, axis=-1)[keep] / delta[keep]
            block_hat = float(np.max(quot, initial=0.0))
            fam_L = max(fam_L, block_hat)
            if block_hat > lipschitz_cap:
                idx = np.flatnonzero(keep)[int(np.argmax(quot))]
                violations.append(
                    (
                        f"A.1:{family}",
                        {"t": float(t[idx]), "point": pts[idx].tolist(), "partner": alt[idx].tolist(),
                         "quotient": block_hat},
                    )
                )
        per_function[family] = {"L": fam_L, "Lambda": growth_hat}
        L_hat = max(L_hat, fam_L)

    lambda_hat, bounded_sigma = _probe_dispersion(spec, t, pts, violations)
    bounded_h = _boundedness_probe(spec, "h", t, pts)

    return ValidationReport(
        L_hat=L_hat,
        Lambda_hat=Lambda_hat,
        lambda_hat=lambda_hat,
        bounded_sigma=bounded_sigma,
        bounded_h=bounded_h,
        probe_points=probe_budget,
        violations=violations,
        per_function=per_function,
    )


def _record_domain_violations(violations, family, finite, t, pts, cap=3):
    bad = np.flatnonzero(~finite)[:cap]
    for idx in bad:
        violations.append(
            ("domain:" + family, {"t": float(t[idx]), "point": pts[idx].tolist()})
        )


def _probe_dispersion(spec, t, pts, violations):
    d, k = spec.d, spec.k
    nv = n_variables(d, k)
    values = [0.0] * nv
    values[0] = t
    for j in range(d + k + k * d):
        values[1 + j] = pts[:, j]
    with np.errstate(all="ignore"):
        rows = [
            [np.broadcast_to(eval_program(p, values), t.shape) for p in row]
            for row in spec.programs["sigma"]
        ]
    sig = np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)  # (n, d, d)
    finite = np.all(np.isfinite(sig), axis=(-2, -1))
    a = np.einsum("nij,nkj->nik", sig, sig)
    eigs = np.full(len(t), np.nan)
    eigs[finite] = np.linalg.eigvalsh(a[finite])[:, 0]
    lambda_hat = float(np.min(eigs[finite])) if np.any(finite) else None
    if lambda_hat is not None and lambda_hat < 0.0:
        idx = int(np.nanargmin(eigs))
        violations.append(("B.2", {"t": float(t[idx]), "point": pts[idx].tolist(), "eig": lambda_hat}))
    bounded = _boundedness_probe(spec, "sigma", t, pts)
    return lambda_hat, bounded


def _boundedness_probe(spec, family, t, pts, tolerance=1.1):
    """Compare suprema over the full box and the half box: a function bounded by
    a constant (rather than growing with its arguments) has ratio close to 1."""
    values = [0.0] * n_variables(spec.d, spec.k)
    values[0] = t
    for j in range(pts.shape[1]):
        values[1 + j] = pts[:, j]
    norms = np.linalg.norm(pts, axis=1)
    v = _eval_family(spec, family, values)
    mag = np.linalg.norm(v, axis=-1)
    finite = np.isfinite(mag)
    inner = mag[finite & (norms <= 0.5 * np.max(norms))]
    if inner.size == 0 or not np.any(finite):
        return False
    full_sup = float(np.max(mag[finite]))
    half_sup = float(np.max(inner))
    return full_sup <= tolerance * half_sup + 1e-12
