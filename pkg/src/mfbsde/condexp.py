"""Least-squares conditional expectations on a particle ensemble.

The conditioning state at node k is the Brownian value W_{t_k}. Projections
solve the normal equations through a thin QR factorization; a trace-scaled
ridge fallback (penalty 1e-10 * tr(A^T A)/p) catches rank deficiency, and
columns with no sample variance are dropped up front so the degenerate
node-0 state reduces cleanly to a plain mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

RIDGE_SCALE = 1e-10


class RegressionError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionBasis:
    """Finite-dimensional regression family.

    kind="polynomial": all monomials of total degree <= degree.
    kind="piecewise": indicator columns of per-coordinate equal-width bins
    (their span contains constants, so the tower property is preserved).
    """

    kind: str = "polynomial"
    degree: int = 3
    bins: int = 50

    def __post_init__(self) -> None:
        if self.kind not in ("polynomial", "piecewise"):
            raise RegressionError(f"unknown basis kind {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 0:
            raise RegressionError("polynomial degree must be >= 0")
        if self.kind == "piecewise" and self.bins < 1:
            raise RegressionError("bin count must be >= 1")


@dataclass(frozen=True)
class ProjectionInfo:
    ridge_used: bool
    dropped_columns: int
    rank: int


def _design_polynomial(state: np.ndarray, degree: int) -> np.ndarray:
    n, s = state.shape
    cols = [np.ones(n)]
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(s), deg):
            col = np.ones(n)
            for j in combo:
                col = col * state[:, j]
            cols.append(col)
    return np.column_stack(cols)


def _design_piecewise(state: np.ndarray, bins: int) -> np.ndarray:
    n, s = state.shape
    pieces = []
    for j in range(s):
        x = state[:, j]
        lo, hi = float(x.min()), float(x.max())
        if hi <= lo:
            pieces.append(np.ones((n, 1)))
            continue
        edges = np.linspace(lo, hi, bins + 1)
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
        block = np.zeros((n, bins))
        block[np.arange(n), idx] = 1.0
        pieces.append(block)
    if s == 1:
        return pieces[0]
    # product bins across coordinates would explode; use additive blocks
    # plus an intercept, which still spans constants.
    return np.column_stack([np.ones(n)] + pieces)


def _design(state: np.ndarray, basis: RegressionBasis) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    if state.ndim == 1:
        state = state[:, None]
    if state.ndim != 2:
        raise RegressionError(f"state must be (N, s), got shape {state.shape}")
    if basis.kind == "polynomial":
        return _design_polynomial(state, basis.degree)
    return _design_piecewise(state, basis.bins)


def _solve(design: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, ProjectionInfo]:
    # Drop columns without sample variance, keeping the leading constant.
    keep = [0] + [j for j in range(1, design.shape[1]) if design[:, j].std() > 0.0]
    dropped = design.shape[1] - len(keep)
    a = design[:, keep]
    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    ridge = bool(diag.min() <= 1e-12 * max(diag.max(), 1.0))
    if not ridge:
        coef = np.linalg.solve(r, q.T @ values)
    else:
        gram = a.T @ a
        lam = RIDGE_SCALE * np.trace(gram) / gram.shape[0]
        coef = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), a.T @ values)
    info = ProjectionInfo(ridge_used=ridge, dropped_columns=dropped, rank=len(keep))
    return a @ coef, info


def project(
    values: np.ndarray,
    state: np.ndarray,
    basis: RegressionBasis,
    return_info: bool = False,
):
    """Fitted E[values | state] evaluated back at each particle."""
    values = np.asarray(values, dtype=np.float64).ravel()
    design = _design(state, basis)
    if design.shape[0] != values.shape[0]:
        raise RegressionError("values and state must share the particle axis")
    fit, info = _solve(design, values)
    return (fit, info) if return_info else fit


def project_increment(
    values: np.ndarray,
    state: np.ndarray,
    increments: np.ndarray,
    dt: float,
    basis: RegressionBasis,
) -> np.ndarray:
    """Componentwise fit of E[values * dW^T | state] / dt, an (N, d) array.

    The projected mean of ``values`` is subtracted before forming the
    product; the conditional expectation is unchanged (E_k[dW] = 0) and the
    martingale part left over carries far less regression noise.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    increments = np.asarray(increments, dtype=np.float64)
    if increments.ndim != 2 or increments.shape[0] != values.shape[0]:
        raise RegressionError("increments must be (N, d) matching values")
    centered = values - project(values, state, basis)
    out = np.empty_like(increments)
    for j in range(increments.shape[1]):
        out[:, j] = project(centered * increments[:, j] / dt, state, basis)
    return out


@dataclass(frozen=True)
class RegressionEngine:
    """A basis bound to convenience methods used throughout the solvers."""

    basis: RegressionBasis

    def project(self, values: np.ndarray, state: np.ndarray) -> np.ndarray:
        return project(values, state, self.basis)

    def project_increment(
        self, values: np.ndarray, state: np.ndarray, increments: np.ndarray, dt: float
    ) -> np.ndarray:
        return project_increment(values, state, increments, dt, self.basis)
