"""Problem instances: dimensions, horizon, start point and coefficients.

A ProblemSpec bundles the four coefficient functions (f, g, sigma, h) as
expression ASTs together with the dimensions (d, k), the time window
[t0, T], the start point x0 and the list of noise levels to sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import expr as E
from .program import Program, compile_expression, eval_program, n_variables


def _as_expr_list(source, arity, count, d, k):
    if isinstance(source, str):
        source = [source]
    items = list(source)
    if len(items) != count:
        raise ValueError(f"{arity} needs {count} expression(s), got {len(items)}")
    return tuple(item if not isinstance(item, str) else E.parse(item, arity, d, k) for item in items)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    d: int
    k: int
    t0: float
    T: float
    x0: np.ndarray
    epsilons: tuple
    f: tuple  # d drift components
    g: tuple  # k generator components
    sigma: tuple  # d rows of d dispersion entries
    h: tuple  # k terminal components

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise ValueError("need d >= 1 and k >= 1")
        if not self.T > self.t0:
            raise ValueError("need T > t0")
        x0 = np.asarray(self.x0, dtype=np.float64).reshape(-1)
        if x0.shape != (self.d,):
            raise ValueError(f"x0 must have length d={self.d}")
        object.__setattr__(self, "x0", x0)
        eps = tuple(float(e) for e in self.epsilons)
        if any(e <= 0 for e in eps):
            raise ValueError("all epsilons must be positive")
        if list(eps) != sorted(eps, reverse=True):
            raise ValueError("epsilons must be listed in descending order")
        object.__setattr__(self, "epsilons", eps)
        if len(self.f) != self.d or len(self.g) != self.k or len(self.h) != self.k:
            raise ValueError("coefficient array shapes do not match (d, k)")
        if len(self.sigma) != self.d or any(len(row) != self.d for row in self.sigma):
            raise ValueError("sigma must be a d x d expression matrix")

    @classmethod
    def from_text(cls, *, d, k, t0, T, x0, epsilons, f, g, sigma, h) -> "ProblemSpec":
        """Build a spec from coefficient source text (scalars or nested lists)."""
        if isinstance(sigma, str):
            sigma = [[sigma]]
        sigma_rows = tuple(_as_expr_list(row, "sigma", d, d, k) for row in sigma)
        if len(sigma_rows) != d:
            raise ValueError(f"sigma needs {d} row(s), got {len(sigma_rows)}")
        return cls(
            d=d,
            k=k,
            t0=float(t0),
            T=float(T),
            x0=np.asarray(x0, dtype=np.float64),
            epsilons=tuple(epsilons),
            f=_as_expr_list(f, "f", d, d, k),
            g=_as_expr_list(g, "g", k, d, k),
            sigma=sigma_rows,
            h=_as_expr_list(h, "h", k, d, k),
        )

    @property
    def horizon(self) -> float:
        return self.T - self.t0

    @property
    def n_vars(self) -> int:
        return n_variables(self.d, self.k)

    @cached_property
    def programs(self):
        compile_ = lambda e: compile_expression(e, self.d, self.k)  # noqa: E731
        return {
            "f": tuple(compile_(e) for e in self.f),
            "g": tuple(compile_(e) for e in self.g),
            "sigma": tuple(tuple(compile_(e) for e in row) for row in self.sigma),
            "h": tuple(compile_(e) for e in self.h),
        }

    def scalar_programs(self) -> "ScalarPrograms":
        """Flat program bundle for the d = k = 1 kernel fast path."""
        if self.d != 1 or self.k != 1:
            raise ValueError("scalar program bundle requires d = k = 1")
        p = self.programs
        return ScalarPrograms(p["f"][0], p["g"][0], p["sigma"][0][0], p["h"][0])

    # -- vectorised evaluation helpers (general d, k) -----------------------

    def _variables(self, t, X, Y=None, Z=None):
        values = [0.0] * self.n_vars
        values[0] = t
        X = np.asarray(X, dtype=np.float64)
        for j in range(self.d):
            values[1 + j] = X[..., j]
        if Y is not None:
            Y = np.asarray(Y, dtype=np.float64)
            for i in range(self.k):
                values[1 + self.d + i] = Y[..., i]
        if Z is not None:
            Z = np.asarray(Z, dtype=np.float64)
            for i in range(self.k):
                for j in range(self.d):
                    values[1 + self.d + self.k + i * self.d + j] = Z[..., i, j]
        return values

    def drift(self, t, X, Y) -> np.ndarray:
        """f(t, x, y) with shape (..., d)."""
        values = self._variables(t, X, Y)
        shape = np.broadcast(np.asarray(X)[..., 0], np.asarray(t)).shape
        out = [np.broadcast_to(eval_program(p, values), shape) for p in self.programs["f"]]
        return np.stack(out, axis=-1)

    def generator(self, t, X, Y, Z=None) -> np.ndarray:
        """g(t, x, y, z) with shape (..., k); Z defaults to zero."""
        values = self._variables(t, X, Y, Z)
        shape = np.broadcast(np.asarray(X)[..., 0], np.asarray(t)).shape
        out = [np.broadcast_to(eval_program(p, values), shape) for p in self.programs["g"]]
        return np.stack(out, axis=-1)

    def dispersion(self, t, X, Y) -> np.ndarray:
        """sigma(t, x, y) with shape (..., d, d)."""
        values = self._variables(t, X, Y)
        shape = np.broadcast(np.asarray(X)[..., 0], np.asarray(t)).shape
        rows = [
            np.stack([np.broadcast_to(eval_program(p, values), shape) for p in row], axis=-1)
            for row in self.programs["sigma"]
        ]
        return np.stack(rows, axis=-2)

    def terminal(self, X) -> np.ndarray:
        """h(x) with shape (..., k)."""
        values = self._variables(0.0, X)
        shape = np.asarray(X)[..., 0].shape
        out = [np.broadcast_to(eval_program(p, values), shape) for p in self.programs["h"]]
        return np.stack(out, axis=-1)


@dataclass(frozen=True)
class ScalarPrograms:
    """Compiled (f, g, sigma, h) for a scalar problem; consumed by the kernels."""

    f: Program
    g: Program
    sigma: Program
    h: Program
