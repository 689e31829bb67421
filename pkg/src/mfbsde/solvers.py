"""Backward particle solvers: scalar sweeps, Picard maps, stitching.

All schemes share one backward step. With E_k the regression projection at
node k and Z_k extracted from the martingale increment,

    Y_k = E_k[Y_{k+1}] + (dt/2) (f(t_k, Z_k) + f(t_{k+1}, Z_{k+1})),

a trapezoidal driver quadrature whose O(dt^2) bias is what the acceptance
tolerances assume. Frozen arguments (the Y cloud, the law) enter per node:
the fixed-point map uses the current input iterate, the Picard scheme for
unbounded terminals the previous sweep's iterate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .condexp import RegressionEngine
from .constants import (
    GlobalConstants,
    global_ode,
    local_radii,
    local_window,
    kappa_local_certificate,
    volterra_weight,
)
from .diagnostics import bmo_norm
from .generators import (
    CertificateConvex,
    CertificateLocal,
    CertificateVolterra,
    FixtureBundle,
    GeneratorSpec,
    GSpec,
)
from .measures import MeasureView, exp_moment
from .paths import PathEnsemble, TimeGrid

NodeDriver = Callable[[int, float, np.ndarray], np.ndarray]


class SolverDivergence(RuntimeError):
    """Picard iteration failed to contract; carries the trace so far."""

    def __init__(self, message: str, trace: "PicardTrace | None" = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 40
    z_clip: float | None = None
    inner_sweeps: int = 1
    init_offset: float = 0.0
    law_refinements: int = 0
    track_iterates: bool = False


@dataclass
class Solution:
    """Discrete solution pair: Y is (N, K+1, n), Z is (N, K, n, d).

    ``k_lo`` locates the first node inside ``grid`` so window solves can
    address global states; full-span solutions have k_lo = 0.
    """

    Y: np.ndarray
    Z: np.ndarray
    grid: TimeGrid
    k_lo: int = 0
    seed_lineage: dict = field(default_factory=dict)
    clip_events: int = 0

    @property
    def particles(self) -> int:
        return self.Y.shape[0]

    @property
    def components(self) -> int:
        return self.Y.shape[2]

    def y0(self) -> np.ndarray:
        """Node-zero value per component (particle mean of the fitted Y)."""
        return self.Y[:, 0, :].mean(axis=0)

    def node_times(self) -> np.ndarray:
        return self.grid.nodes[self.k_lo : self.k_lo + self.Y.shape[1]]


@dataclass
class PicardStep:
    iteration: int
    dy_sup: float
    dz_norm: float
    combined: float
    max_abs_y: float
    qv_sq: float | None = None
    in_ball_sup: bool | None = None
    in_ball_qv: bool | None = None
    monitors: dict = field(default_factory=dict)


@dataclass
class PicardTrace:
    steps: list[PicardStep] = field(default_factory=list)
    converged: bool = False
    note: str = ""
    iterates: list[np.ndarray] = field(default_factory=list)

    def differences(self) -> np.ndarray:
        return np.array([s.combined for s in self.steps])

    def ratios(self) -> np.ndarray:
        d = self.differences()
        with np.errstate(divide="ignore", invalid="ignore"):
            r = d[1:] / d[:-1]
        return np.where(np.isfinite(r), r, 0.0)

    @property
    def iterations(self) -> int:
        return len(self.steps)


def _clip_rows(z: np.ndarray, radius: float | None) -> tuple[np.ndarray, int]:
    """Rescale rows whose norm exceeds the radius; count the events."""
    if radius is None or not math.isfinite(radius):
        return z, 0
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    over = norms > radius
    if not over.any():
        return z, 0
    scale = np.where(over, radius / np.maximum(norms, 1e-300), 1.0)
    return z * scale, int(over.sum())


def solve_scalar(
    grid: TimeGrid,
    paths: PathEnsemble,
    driver: NodeDriver,
    terminal: np.ndarray,
    engine: RegressionEngine,
    opts: SolverOptions = SolverOptions(),
    k_lo: int = 0,
    k_hi: int | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """One backward sweep of a scalar quadratic BSDE on nodes [k_lo, k_hi].

    ``driver(k, t, z)`` maps the own-row values (N, d) at node k to driver
    values (N,); it must accept k = k_hi for the terminal-side quadrature
    point. Extra inner sweeps re-extract Z from the driver-corrected
    target, a damping that helps stiff quadratic coefficients.
    Returns (Y (N, K+1), Z (N, K, d), clip events).
    """
    if k_hi is None:
        k_hi = grid.steps
    if not 0 <= k_lo < k_hi <= grid.steps:
        raise ValueError(f"bad node range [{k_lo}, {k_hi}]")
    terminal = np.asarray(terminal, dtype=np.float64).ravel()
    n_part = paths.particles
    if terminal.shape[0] != n_part:
        raise ValueError("terminal values must have one entry per particle")
    span = k_hi - k_lo
    dt = grid.dt
    y = np.empty((n_part, span + 1))
    z = np.empty((n_part, span, paths.dimension))
    y[:, span] = terminal
    clips = 0
    f_next: np.ndarray | None = None
    for k in range(k_hi - 1, k_lo - 1, -1):
        j = k - k_lo
        state = paths.brownian_at(k)
        y_next = y[:, j + 1]
        z_k = engine.project_increment(y_next, state, paths.increments[:, k, :], dt)
        z_k, c = _clip_rows(z_k, opts.z_clip)
        clips += c
        if f_next is None:  # terminal quadrature point, own row falls back
            f_next = driver(k + 1, grid.nodes[k + 1], z_k)
        f_here = driver(k, grid.nodes[k], z_k)
        for _ in range(opts.inner_sweeps - 1):
            target = y_next + 0.5 * (f_here + f_next) * dt
            z_k = engine.project_increment(target, state, paths.increments[:, k, :], dt)
            z_k, c = _clip_rows(z_k, opts.z_clip)
            clips += c
            f_here = driver(k, grid.nodes[k], z_k)
        y[:, j] = engine.project(y_next, state) + 0.5 * (f_here + f_next) * dt
        z[:, j, :] = z_k
        f_next = f_here
    return y, z, clips


def _flat_solution(terminal: np.ndarray, grid: TimeGrid, span: int, d: int, k_lo: int, offset: float = 0.0) -> Solution:
    n_part, n_comp = terminal.shape
    y = np.repeat(terminal[:, None, :], span + 1, axis=1)
    if offset:
        y[:, :span, :] += offset  # probe shifts the start, never the data
    z = np.zeros((n_part, span, n_comp, d))
    return Solution(Y=y, Z=z, grid=grid, k_lo=k_lo)


def _law_view(spec: GeneratorSpec, y_slice: np.ndarray, z_slice: np.ndarray) -> MeasureView | None:
    if spec.law_dependence == "none":
        return None
    if spec.law_dependence == "y_only":
        return MeasureView(y_slice)
    return MeasureView(y_slice, z_slice)


def psi_map(
    spec: GeneratorSpec,
    input_sol: Solution,
    grid: TimeGrid,
    paths: PathEnsemble,
    engine: RegressionEngine,
    opts: SolverOptions = SolverOptions(),
    k_lo: int = 0,
    k_hi: int | None = None,
    law_source: Solution | None = None,
    aux: np.ndarray | None = None,
) -> Solution:
    """Frozen-coefficient map: component i solves a scalar BSDE whose own
    Z row is free while Y, the other rows, and the law come from the input
    iterate (or ``law_source`` when given) at the same node.
    """
    if k_hi is None:
        k_hi = grid.steps
    span = k_hi - k_lo
    laws = law_source if law_source is not None else input_sol
    n, d = spec.n, spec.d
    law_cache: dict[int, MeasureView | None] = {}

    def law_at(j: int) -> MeasureView | None:
        if j not in law_cache:
            z_j = laws.Z[:, min(j, span - 1)]
            law_cache[j] = _law_view(spec, laws.Y[:, j], z_j)
        return law_cache[j]

    out_y = np.empty((paths.particles, span + 1, n))
    out_z = np.empty((paths.particles, span, n, d))
    clips = 0
    terminal = input_sol.Y[:, span, :]
    for i in range(n):
        def driver(k: int, t: float, rows: np.ndarray, i: int = i) -> np.ndarray:
            j = k - k_lo
            z_frozen = input_sol.Z[:, min(j, span - 1)].copy()
            z_frozen[:, i, :] = rows
            return spec.evaluate(t, input_sol.Y[:, j], z_frozen, law_at(j), aux)[:, i]

        yi, zi, c = solve_scalar(grid, paths, driver, terminal[:, i], engine, opts, k_lo, k_hi)
        out_y[:, :, i] = yi
        out_z[:, :, i, :] = zi
        clips += c
    out_y[:, span, :] = terminal  # keep the terminal bitwise
    return Solution(Y=out_y, Z=out_z, grid=grid, k_lo=k_lo, seed_lineage={"seed": paths.seed}, clip_events=clips)


def _combined_norm(dy_sup: float, dz_bmo: float) -> float:
    return math.sqrt(dy_sup**2 + dz_bmo**2)


def solve_local(
    spec: GeneratorSpec,
    cert: CertificateLocal,
    terminal: np.ndarray,
    grid: TimeGrid,
    paths: PathEnsemble,
    engine: RegressionEngine,
    opts: SolverOptions = SolverOptions(),
    k_lo: int = 0,
    k_hi: int | None = None,
    consts=None,
    aux: np.ndarray | None = None,
) -> tuple[Solution, PicardTrace]:
    """Picard iteration of the frozen-coefficient map on one window.

    Starts from the flat terminal propagation with zero Z (plus any probe
    offset), records ball membership against (K1, K2), and raises
    :class:`SolverDivergence` when the empirical ratios stop contracting.
    """
    if k_hi is None:
        k_hi = grid.steps
    span = k_hi - k_lo
    terminal = np.asarray(terminal, dtype=np.float64)
    if terminal.ndim == 1:
        terminal = terminal[:, None]
    if consts is None:
        consts = local_window(cert, spec.n)
    k1, k2 = consts.K1, consts.K2
    if opts.z_clip is None:
        clip = 4.0 * math.sqrt(k2) if math.isfinite(k2) else None
        opts = replace(opts, z_clip=clip)
    current = _flat_solution(terminal, grid, span, spec.d, k_lo, offset=opts.init_offset)
    trace = PicardTrace()
    floor = 1e-13 * max(1.0, float(np.abs(terminal).max()))
    for it in range(1, opts.max_iter + 1):
        out = psi_map(spec, current, grid, paths, engine, opts, k_lo, k_hi, aux=aux)
        for _ in range(opts.law_refinements):
            out = psi_map(spec, current, grid, paths, engine, opts, k_lo, k_hi, law_source=out, aux=aux)
        dy = float(np.abs(out.Y - current.Y).max())
        dz = bmo_norm(out.Z - current.Z, grid, paths, engine, k_lo=k_lo)
        combined = _combined_norm(dy, dz)
        max_y = float(np.abs(out.Y).max())
        qv = bmo_norm(out.Z, grid, paths, engine, k_lo=k_lo) ** 2
        trace.steps.append(
            PicardStep(
                iteration=it,
                dy_sup=dy,
                dz_norm=dz,
                combined=combined,
                max_abs_y=max_y,
                qv_sq=qv,
                in_ball_sup=bool(max_y <= k1),
                in_ball_qv=bool(qv <= k2),
            )
        )
        if opts.track_iterates:
            trace.iterates.append(out.Y.copy())
        current = out
        if combined <= max(opts.tol, floor):
            trace.converged = True
            break
        ratios = trace.ratios()
        if it >= 3 and np.all(ratios[-2:] > 0.9) and combined > 100.0 * opts.tol:
            raise SolverDivergence(
                f"Picard ratios {ratios[-2:]} not contracting on window of length "
                f"{span * grid.dt:.3e}; retry with a shorter window",
                trace,
            )
    if not trace.converged:
        raise SolverDivergence(
            f"no convergence to tol={opts.tol:g} within {opts.max_iter} iterations",
            trace,
        )
    return current, trace


@dataclass(frozen=True)
class WindowRecord:
    k_lo: int
    k_hi: int
    iterations: int
    halvings: int


@dataclass
class GlobalReport:
    constants: GlobalConstants
    windows: list[WindowRecord] = field(default_factory=list)
    terminal_feasible: bool = True

    @property
    def window_count(self) -> int:
        return len(self.windows)


def solve_global(
    spec: GeneratorSpec,
    cert,
    terminal: np.ndarray,
    grid: TimeGrid,
    paths: PathEnsemble,
    engine: RegressionEngine,
    opts: SolverOptions = SolverOptions(),
    aux: np.ndarray | None = None,
) -> tuple[Solution, GlobalReport]:
    """Backward stitching of local solves on windows of length delta_kappa.

    Windows are quantized to whole grid steps with a one-step floor (the
    certified length is often far below the grid resolution); a window that
    fails to contract is halved up to six times before giving up. Seam
    values are shared arrays, so stitching is exact by construction.
    """
    gconsts = global_ode(cert, spec.n, grid.horizon)
    terminal = np.asarray(terminal, dtype=np.float64)
    if terminal.ndim == 1:
        terminal = terminal[:, None]
    feasible = bool(np.max(np.sum(terminal**2, axis=1)) <= spec.n * gconsts.c_tilde)
    report = GlobalReport(constants=gconsts, terminal_feasible=feasible)
    dt = grid.dt
    spw = max(1, int(gconsts.delta_kappa / dt))
    # honor the certified window count even when flooring to whole steps
    cap = math.ceil(grid.horizon / gconsts.delta_kappa) + 6
    if math.isfinite(cap) and cap > 0:
        spw = max(spw, math.ceil(grid.steps / cap))
    local_cert = kappa_local_certificate(cert, gconsts.kappa, grid.horizon)
    window_consts = gconsts.window
    n, d = spec.n, spec.d
    full_y = np.empty((paths.particles, grid.steps + 1, n))
    full_z = np.empty((paths.particles, grid.steps, n, d))
    full_y[:, grid.steps, :] = terminal
    clips = 0
    k_hi = grid.steps
    while k_hi > 0:
        size = min(spw, k_hi)
        halvings = 0
        while True:
            k_lo = k_hi - size
            try:
                sol, trace = solve_local(
                    spec,
                    local_cert,
                    full_y[:, k_hi, :],
                    grid,
                    paths,
                    engine,
                    opts,
                    k_lo=k_lo,
                    k_hi=k_hi,
                    consts=window_consts,
                    aux=aux,
                )
                break
            except SolverDivergence:
                if size == 1 or halvings >= 6:
                    raise
                size = max(1, size // 2)
                halvings += 1
        full_y[:, k_lo:k_hi, :] = sol.Y[:, :-1, :]
        full_z[:, k_lo:k_hi, :, :] = sol.Z
        clips += sol.clip_events
        report.windows.append(WindowRecord(k_lo=k_lo, k_hi=k_hi, iterations=trace.iterations, halvings=halvings))
        k_hi = k_lo
    solution = Solution(
        Y=full_y,
        Z=full_z,
        grid=grid,
        seed_lineage={"seed": paths.seed},
        clip_events=clips,
    )
    return solution, report


def solve_theta(
    spec: GeneratorSpec,
    cert: CertificateConvex,
    terminal: np.ndarray,
    grid: TimeGrid,
    paths: PathEnsemble,
    engine: RegressionEngine,
    opts: SolverOptions = SolverOptions(),
    aux: np.ndarray | None = None,
) -> tuple[Solution, PicardTrace]:
    """Picard scheme for unbounded terminals: sweep m+1 freezes the Y
    argument and the law at the previous sweep's iterate, starting from
    the zero pair. Exponential moments of the path supremum and the
    theta-interpolated differences (theta = 1/2) are recorded per sweep.
    """
    terminal = np.asarray(terminal, dtype=np.float64)
    if terminal.ndim == 1:
        terminal = terminal[:, None]
    n, d, m = spec.n, spec.d, grid.steps
    n_part = paths.particles
    y_prev = np.zeros((n_part, m + 1, n))
    z_prev = np.zeros((n_part, m, n, d))
    if opts.init_offset:
        y_prev += opts.init_offset
    trace = PicardTrace()
    gamma = cert.gamma
    clips = 0
    for it in range(1, opts.max_iter + 1):
        law_cache: dict[int, MeasureView | None] = {}

        def law_at(k: int) -> MeasureView | None:
            if k not in law_cache:
                law_cache[k] = _law_view(spec, y_prev[:, k], z_prev[:, min(k, m - 1)])
            return law_cache[k]

        y_new = np.empty_like(y_prev)
        z_new = np.empty_like(z_prev)
        for i in range(n):
            def driver(k: int, t: float, rows: np.ndarray, i: int = i) -> np.ndarray:
                z_arg = np.zeros((n_part, n, d))
                z_arg[:, i, :] = rows
                return spec.evaluate(t, y_prev[:, k], z_arg, law_at(k), aux)[:, i]

            yi, zi, c = solve_scalar(grid, paths, driver, terminal[:, i], engine, opts)
            y_new[:, :, i] = yi
            z_new[:, :, i, :] = zi
            clips += c
        y_new[:, m, :] = terminal
        dy = float(np.abs(y_new - y_prev).max())
        dz = float(np.sqrt(np.mean((z_new - z_prev) ** 2)))
        sup_y = np.max(np.linalg.norm(y_new, axis=2), axis=1)
        monitors = {}
        for q in (1, 2):
            em = exp_moment(gamma * sup_y, q=q)
            monitors[f"exp_sup_q{q}_log"] = em.log_value
        if it >= 2:
            theta = 0.5
            delta = np.max(np.abs((y_new - theta * y_prev) / (1.0 - theta)), axis=(1, 2))
            monitors["theta_delta_sup_log"] = exp_moment(gamma * delta, q=1).log_value
        trace.steps.append(
            PicardStep(
                iteration=it,
                dy_sup=dy,
                dz_norm=dz,
                combined=dy,
                max_abs_y=float(np.abs(y_new).max()),
                monitors=monitors,
            )
        )
        if opts.track_iterates:
            trace.iterates.append(y_new.copy())
        converged = dy <= opts.tol
        y_prev, z_prev = y_new, z_new
        if converged:
            trace.converged = True
            break
        d_all = trace.differences()
        if it >= 4 and np.all(np.diff(d_all[-3:]) > 0) and d_all[-1] > 1e3:
            raise SolverDivergence("Picard sweeps diverging", trace)
    if not trace.converged:
        raise SolverDivergence(f"no convergence within {opts.max_iter} sweeps", trace)
    sol = Solution(
        Y=y_prev,
        Z=z_prev,
        grid=grid,
        seed_lineage={"seed": paths.seed},
        clip_events=clips,
    )
    return sol, trace


def solve_volterra(
    spec: GeneratorSpec,
    g: GSpec,
    vcert: CertificateVolterra,
    ccert: CertificateConvex,
    terminal: np.ndarray,
    grid: TimeGrid,
    paths: PathEnsemble,
    engine: RegressionEngine,
    opts: SolverOptions = SolverOptions(),
    aux: np.ndarray | None = None,
) -> tuple[Solution, PicardTrace]:
    """Two-level scheme for a delayed (Volterra-type) mean-field term.

    The inner pair solves the plain BSDE without g. Outer sweep r maps

        Y^{r+1}_k = Y'_k + sum_{j >= k} E_k[ g(j, Y^r, Z', law_j) ] dt,

    using one projection of the tail sum per node. Convergence is tracked
    in the exp(beta t)-weighted squared sup norm with beta = 32 C^2 T, and
    iteration stops when the unweighted sup difference drops below tol.
    """
    inner_sol, inner_trace = solve_theta(spec, ccert, terminal, grid, paths, engine, opts, aux=aux)
    m = grid.steps
    beta = volterra_weight(vcert.C, grid.horizon)
    weights = np.exp(beta * grid.nodes)
    n = spec.n
    y_prev = np.zeros_like(inner_sol.Y)
    if opts.init_offset:
        y_prev += opts.init_offset
    trace = PicardTrace(note=f"inner sweeps: {inner_trace.iterations}")
    for it in range(1, opts.max_iter + 1):
        g_vals = np.empty((paths.particles, m + 1, n))
        for j in range(m + 1):
            law = MeasureView(y_prev[:, j])
            g_vals[:, j, :] = g(j, y_prev, inner_sol.Z, law)
        tails = np.zeros((paths.particles, n))
        y_new = np.empty_like(y_prev)
        y_new[:, m, :] = inner_sol.Y[:, m, :]
        for k in range(m - 1, -1, -1):
            tails = tails + g_vals[:, k, :] * grid.dt
            state = paths.brownian_at(k)
            for i in range(n):
                y_new[:, k, i] = inner_sol.Y[:, k, i] + engine.project(tails[:, i], state)
        diff = y_new - y_prev
        dy = float(np.abs(diff).max())
        weighted = float(np.mean(np.max(weights[None, :] * np.sum(diff**2, axis=2), axis=1)))
        trace.steps.append(
            PicardStep(
                iteration=it,
                dy_sup=dy,
                dz_norm=0.0,
                combined=dy,
                max_abs_y=float(np.abs(y_new).max()),
                monitors={"weighted_sq": weighted},
            )
        )
        if opts.track_iterates:
            trace.iterates.append(y_new.copy())
        y_prev = y_new
        if dy <= opts.tol:
            trace.converged = True
            break
    if not trace.converged:
        raise SolverDivergence(f"outer sweeps did not converge within {opts.max_iter}", trace)
    sol = Solution(
        Y=y_prev,
        Z=inner_sol.Z,
        grid=grid,
        seed_lineage={"seed": paths.seed},
        clip_events=inner_sol.clip_events,
    )
    return sol, trace


def weighted_ratios(trace: PicardTrace) -> np.ndarray:
    """Successive ratios of the weighted squared outer differences."""
    w = np.array([s.monitors.get("weighted_sq", np.nan) for s in trace.steps])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = w[1:] / w[:-1]
    return r


def run_scheme(
    bundle: FixtureBundle,
    scheme: str,
    grid: TimeGrid,
    paths: PathEnsemble,
    engine: RegressionEngine,
    opts: SolverOptions = SolverOptions(),
):
    """Dispatch a fixture to a scheme; returns (Solution, trace, extras)."""
    terminal = np.asarray(bundle.terminal(paths), dtype=np.float64)
    if terminal.ndim == 1:
        terminal = terminal[:, None]
    if terminal.shape != (paths.particles, bundle.spec.n):
        raise ValueError(f"terminal sampler returned shape {terminal.shape}")
    aux = paths.aux
    if scheme == "theta":
        if bundle.convex is None:
            raise ValueError(f"fixture {bundle.name} has no Picard certificate")
        sol, trace = solve_theta(bundle.spec, bundle.convex, terminal, grid, paths, engine, opts, aux=aux)
        return sol, trace, {}
    if scheme == "local":
        if bundle.local is None:
            raise ValueError(f"fixture {bundle.name} has no local certificate")
        sol, trace = solve_local(bundle.spec, bundle.local, terminal, grid, paths, engine, opts, aux=aux)
        return sol, trace, {"window": local_window(bundle.local, bundle.spec.n)}
    if scheme == "global":
        if bundle.global_ is None:
            raise ValueError(f"fixture {bundle.name} has no global certificate")
        sol, report = solve_global(bundle.spec, bundle.global_, terminal, grid, paths, engine, opts, aux=aux)
        return sol, None, {"report": report}
    if scheme == "volterra":
        if bundle.volterra is None or bundle.g is None:
            raise ValueError(f"fixture {bundle.name} has no Volterra data")
        sol, trace = solve_volterra(
            bundle.spec, bundle.g, bundle.volterra, bundle.convex, terminal, grid, paths, engine, opts, aux=aux
        )
        return sol, trace, {}
    raise ValueError(f"unknown scheme {scheme!r}")


def certified_ball(cert: CertificateLocal, n: int) -> tuple[float, float]:
    """Radii (K1, K2) the local Picard iterates are checked against."""
    return local_radii(cert, n)


def summarize_nodes(sol: Solution, paths: PathEnsemble, engine: RegressionEngine) -> list[dict]:
    """Per-node summary rows: time, mean |Y| per component, max |Y|, and a
    running estimate of the conditional tail quadratic variation."""
    from .diagnostics import bmo_profile

    times = sol.node_times()
    span = sol.Z.shape[1]
    profile = bmo_profile(sol.Z, sol.grid, paths, engine, k_lo=sol.k_lo) if span else np.array([])
    rows = []
    for j, t in enumerate(times):
        row = {"node": sol.k_lo + j, "time": float(t), "max_abs_y": float(np.abs(sol.Y[:, j]).max())}
        for i in range(sol.components):
            row[f"mean_abs_y{i}"] = float(np.abs(sol.Y[:, j, i]).mean())
        row["tail_qv"] = float(profile[j]) if j < len(profile) else 0.0
        rows.append(row)
    return rows


def export_csv(sol: Solution, paths: PathEnsemble, engine: RegressionEngine, path: str) -> None:
    import csv

    rows = summarize_nodes(sol, paths, engine)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


_SOL_MAGIC = b"MFBS0001"


def dump_solution(sol: Solution, path: str) -> None:
    """Fixed binary layout: magic, int64 header (N, K, n, d, k_lo, steps),
    float64 horizon, then Y and Z row-major."""
    import struct

    n_part, kp1, n = sol.Y.shape
    d = sol.Z.shape[3] if sol.Z.size else 1
    with open(path, "wb") as fh:
        fh.write(_SOL_MAGIC)
        fh.write(struct.pack("<qqqqqq", n_part, kp1 - 1, n, d, sol.k_lo, sol.grid.steps))
        fh.write(struct.pack("<d", sol.grid.horizon))
        fh.write(np.ascontiguousarray(sol.Y, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(sol.Z, dtype="<f8").tobytes())


def load_solution(path: str) -> Solution:
    import struct

    with open(path, "rb") as fh:
        magic = fh.read(len(_SOL_MAGIC))
        if magic != _SOL_MAGIC:
            raise ValueError("not a solution file")
        n_part, span, n, d, k_lo, steps = struct.unpack("<qqqqqq", fh.read(48))
        (horizon,) = struct.unpack("<d", fh.read(8))
        y = np.frombuffer(fh.read(n_part * (span + 1) * n * 8), dtype="<f8").reshape(n_part, span + 1, n)
        z = np.frombuffer(fh.read(n_part * span * n * d * 8), dtype="<f8").reshape(n_part, span, n, d)
    grid = TimeGrid(horizon=horizon, steps=steps)
    return Solution(Y=y.copy(), Z=z.copy(), grid=grid, k_lo=k_lo)
