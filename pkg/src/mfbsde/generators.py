"""Driver specifications, growth certificates, and the fixture registry.

A driver evaluates vectorized over particles: given a time, the Y cloud
(N, n), the Z cloud (N, n, d), and the shared law view, it returns driver
values (N, n). Diagonal structure means component i is quadratic in its own
Z row only; certificates carry the constants that make that quantitative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measures import MeasureView

Evaluator = Callable[[float, np.ndarray, np.ndarray, MeasureView | None, np.ndarray | None], np.ndarray]


class FixtureError(KeyError):
    pass


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class MonomialFn:
    """Increasing map x -> c0 + c1 * x**r on [0, inf), with c0, c1 >= 0."""

    c0: float = 0.0
    c1: float = 0.0
    r: float = 1.0

    def __post_init__(self) -> None:
        if self.c0 < 0 or self.c1 < 0:
            raise CertificateError("monomial coefficients must be nonnegative")
        if self.r < 1:
            raise CertificateError("monomial exponent must be >= 1")

    def __call__(self, x):
        return self.c0 + self.c1 * np.abs(x) ** self.r

    @property
    def is_zero(self) -> bool:
        return self.c0 == 0.0 and self.c1 == 0.0


ZERO_FN = MonomialFn(0.0, 0.0, 1.0)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise CertificateError(msg)


@dataclass(frozen=True)
class CertificateLocal:
    """Growth budget for the small-window theory.

    |f^i| <= zeta_t + psi(|y|) + (gamma/2)|z^i|^2
             + lam * sum_{j != i} |z^j|^(1+alpha)
             + psi0(W2(mu1, d0)) + gamma0 * W2(mu2, d0)^(1+alpha),
    with ||xi||_inf <= M1 and ||int zeta dt||_inf <= M2.
    """

    gamma: float
    lam: float
    gamma0: float
    alpha: float
    M1: float
    M2: float
    psi: MonomialFn = ZERO_FN
    psi0: MonomialFn = ZERO_FN

    def __post_init__(self) -> None:
        _require(self.gamma > 0, "gamma must be positive")
        _require(self.lam >= 0 and self.gamma0 >= 0, "lam and gamma0 must be nonnegative")
        _require(0 <= self.alpha < 1, "alpha must lie in [0, 1)")
        _require(self.M1 >= 0 and self.M2 >= 0, "M1 and M2 must be nonnegative")


@dataclass(frozen=True)
class CertificateGlobal:
    """Linear-growth budget for terminal-restricted global solves.

    |f^i| <= zeta_t + L|y| + (gamma/2)|z^i|^2 + L * W2(mu1, d0),
    with ||xi||_inf <= M1 and ||int |zeta|^2 dt||_inf <= M3; psi records the
    modulus of the z-Lipschitz bound and is carried for reporting only.
    """

    L: float
    gamma: float
    M1: float
    M3: float
    psi: MonomialFn = ZERO_FN

    def __post_init__(self) -> None:
        _require(self.gamma > 0, "gamma must be positive")
        _require(self.L >= 0, "L must be nonnegative")
        _require(self.M1 >= 0 and self.M3 >= 0, "M1 and M3 must be nonnegative")


@dataclass(frozen=True)
class CertificateConvex:
    """Budget for the Picard scheme with unbounded terminals.

    |f^i| <= zeta_t + K|y| + (gamma/2)|z^i|^2 + K * W1(mu, d0), each f^i
    depending on its own Z row only, and convex or concave in it.
    """

    K: float
    gamma: float
    convexity: tuple[str, ...] = ("convex",)

    def __post_init__(self) -> None:
        _require(self.gamma > 0, "gamma must be positive")
        _require(self.K >= 0, "K must be nonnegative")
        _require(
            all(c in ("convex", "concave") for c in self.convexity),
            "convexity entries must be 'convex' or 'concave'",
        )


@dataclass(frozen=True)
class CertificateVolterra:
    """Budget for the delayed outer term g of a Volterra-type system."""

    C: float
    gamma: float
    bounded_g: bool = False

    def __post_init__(self) -> None:
        _require(self.C >= 0, "C must be nonnegative")
        _require(self.gamma > 0, "gamma must be positive")


@dataclass(frozen=True)
class GeneratorSpec:
    """Vectorized driver with structural metadata.

    ``law_dependence`` is one of "joint" (needs Y and Z clouds), "y_only",
    or "none". ``zeta_level`` is the pointwise bound of the absorbing
    process zeta_t used by growth audits; fixtures here model it constant.
    """

    n: int
    d: int
    evaluate: Evaluator
    diagonal: bool = True
    law_dependence: str = "joint"
    zeta_level: float = 0.0

    def __post_init__(self) -> None:
        _require(self.n >= 1 and self.d >= 1, "n and d must be positive")
        _require(
            self.law_dependence in ("joint", "y_only", "none"),
            "law_dependence must be joint, y_only, or none",
        )


# Delayed-term specification for Volterra-type systems: maps (node index,
# Y history (N, M+1, n), Z (N, M, n, d), law at that node) to (N, n).
GSpec = Callable[[int, np.ndarray, np.ndarray, MeasureView], np.ndarray]


@dataclass(frozen=True)
class FixtureBundle:
    name: str
    spec: GeneratorSpec
    terminal: Callable
    local: CertificateLocal | None = None
    global_: CertificateGlobal | None = None
    convex: CertificateConvex | None = None
    volterra: CertificateVolterra | None = None
    g: GSpec | None = None
    oracle: str | None = None
    params: dict = field(default_factory=dict)

    def certificate(self):
        """The certificate matching the fixture's primary scheme."""
        for cert in (self.local, self.global_, self.convex, self.volterra):
            if cert is not None:
                return cert
        raise CertificateError(f"fixture {self.name} carries no certificate")


def freeze_rows(
    spec: GeneratorSpec,
    component: int,
    y_values: np.ndarray,
    z_values: np.ndarray,
    law: MeasureView | None,
    aux: np.ndarray | None = None,
) -> Callable[[float, np.ndarray], np.ndarray]:
    """Scalar driver in the own Z row, all other arguments frozen.

    ``y_values`` is (N, n) and ``z_values`` (N, n, d); the returned callable
    maps (t, rows (N, d)) to component values (N,). Evaluating it at the
    frozen row i reproduces the full driver component exactly.
    """
    if not 0 <= component < spec.n:
        raise CertificateError(f"component {component} outside 0..{spec.n - 1}")
    y_values = np.asarray(y_values, dtype=np.float64)
    z_values = np.asarray(z_values, dtype=np.float64)

    def frozen(t: float, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        z_mod = z_values.copy()
        z_mod[:, component, :] = rows
        return spec.evaluate(t, y_values, z_mod, law, aux)[:, component]

    return frozen


# ---------------------------------------------------------------------------
# Fixture registry
# ---------------------------------------------------------------------------


def _row_norms(z: np.ndarray) -> np.ndarray:
    return np.linalg.norm(z, axis=2)  # (N, n)


def _terminal_brownian(scale: float = 1.0):
    def terminal(paths) -> np.ndarray:
        w = paths.terminal()
        return scale * w

    return terminal


def _terminal_tanh(scale: float):
    def terminal(paths) -> np.ndarray:
        return scale * np.tanh(paths.terminal())

    return terminal


def _terminal_const(value: float, n: int):
    def terminal(paths) -> np.ndarray:
        return np.full((paths.particles, n), value)

    return terminal


def _fixture_pure_quadratic(
    gamma: float = 1.0,
    terminal: str = "brownian",
    M1: float = 1.0,
    lam: float = 0.1,
    gamma0: float = 0.1,
) -> FixtureBundle:
    """f(t, y, z, mu) = (gamma/2) |z|^2 in one dimension."""

    def evaluate(t, y, z, law, aux):
        return 0.5 * gamma * _row_norms(z) ** 2

    spec = GeneratorSpec(n=1, d=1, evaluate=evaluate, law_dependence="none")
    if terminal == "brownian":
        term, local = _terminal_brownian(), None
    elif terminal == "tanh":
        term = _terminal_tanh(M1)
        local = CertificateLocal(gamma=gamma, lam=lam, gamma0=gamma0, alpha=0.0, M1=M1, M2=0.0)
    else:
        raise FixtureError(f"unknown terminal kind {terminal!r}")
    convex = CertificateConvex(K=0.0, gamma=gamma)
    return FixtureBundle(
        name="pure_quadratic",
        spec=spec,
        terminal=term,
        local=local,
        convex=convex,
        oracle="cole_hopf",
        params={"gamma": gamma, "terminal": terminal, "M1": M1, "lam": lam, "gamma0": gamma0},
    )


def _fixture_linear_mf(a: float = 0.0, b: float = 1.0, terminal: str = "const", value: float = 1.0) -> FixtureBundle:
    """f = a y + b E[Y], scalar and z-free; matched by a closed-form ODE."""

    def evaluate(t, y, z, law, aux):
        mean = law.mean_y()[0] if law is not None else 0.0
        return a * y + b * mean

    spec = GeneratorSpec(n=1, d=1, evaluate=evaluate, law_dependence="y_only")
    big = max(abs(a), abs(b))
    convex = CertificateConvex(K=big, gamma=1.0)
    if terminal == "const":
        term = _terminal_const(value, 1)
        local = CertificateLocal(
            gamma=1.0,
            lam=0.0,
            gamma0=0.0,
            alpha=0.0,
            M1=abs(value),
            M2=0.0,
            psi=MonomialFn(0.0, abs(a), 1.0),
            psi0=MonomialFn(0.0, abs(b), 1.0),
        )
    elif terminal == "brownian":
        term, local = _terminal_brownian(), None
    else:
        raise FixtureError(f"unknown terminal kind {terminal!r}")
    return FixtureBundle(
        name="linear_mf",
        spec=spec,
        terminal=term,
        local=local,
        convex=convex,
        oracle="linear_mf",
        params={"a": a, "b": b, "terminal": terminal, "value": value},
    )


def _fixture_remark31(n: int = 2, M1: float = 0.5, horizon: float = 0.25) -> FixtureBundle:
    """Fully coupled sub-quadratic driver with cubic law growth.

    f^i = (|y|^2 + sin|z^i|) |z| + |z|^(4/3) + |z^i|^2
          + W2(mu1, d0)^3 cos(W2(mu2, d0)) + W2(mu2, d0)^(4/3).

    Certificate constants follow from Young splits of the cross terms:
    gamma = 3 + 2 n^(1/3), lam = 3/4 + n^(1/3), alpha = 1/3,
    psi(x) = 2n + (2n - 1) x^8, psi0(x) = x^3, gamma0 = 1, zeta = n^(1/3).
    """

    def evaluate(t, y, z, law, aux):
        rows = _row_norms(z)  # (N, n)
        full = np.linalg.norm(z.reshape(z.shape[0], -1), axis=1)[:, None]
        ynorm = np.linalg.norm(y, axis=1)[:, None]
        w1 = law.w_y(2) if law is not None else 0.0
        w2 = law.w_z(2) if law is not None and law.has_z else 0.0
        coupling = w1**3 * math.cos(w2) + w2 ** (4.0 / 3.0)
        return (
            (ynorm**2 + np.sin(rows)) * full
            + full ** (4.0 / 3.0)
            + rows**2
            + coupling
        )

    croot = n ** (1.0 / 3.0)
    spec = GeneratorSpec(n=n, d=n, evaluate=evaluate, law_dependence="joint", zeta_level=croot)
    local = CertificateLocal(
        gamma=3.0 + 2.0 * croot,
        lam=0.75 + croot,
        gamma0=1.0,
        alpha=1.0 / 3.0,
        M1=M1 * math.sqrt(n),
        M2=croot * horizon,
        psi=MonomialFn(2.0 * n, 2.0 * n - 1.0, 8.0),
        psi0=MonomialFn(0.0, 1.0, 3.0),
    )
    return FixtureBundle(
        name="remark31",
        spec=spec,
        terminal=_terminal_tanh(M1),
        local=local,
        params={"n": n, "M1": M1, "horizon": horizon},
    )


def _fixture_eq41(n: int = 2, M1: float = 1.0, horizon: float = 1.0) -> FixtureBundle:
    """Lipschitz-in-law driver with bounded cross rows.

    f^i = 1 + |y| + |z^i|^2 + sum_{j != i} sin|z^j| + W2(mu1, d0) cos(W2(mu2, d0)).
    """

    def evaluate(t, y, z, law, aux):
        rows = _row_norms(z)
        ynorm = np.linalg.norm(y, axis=1)[:, None]
        sins = np.sin(rows)
        cross = sins.sum(axis=1, keepdims=True) - sins
        w1 = law.w_y(2) if law is not None else 0.0
        w2 = law.w_z(2) if law is not None and law.has_z else 0.0
        return 1.0 + ynorm + rows**2 + cross + w1 * math.cos(w2)

    spec = GeneratorSpec(n=n, d=n, evaluate=evaluate, law_dependence="joint", zeta_level=float(n))
    global_ = CertificateGlobal(
        L=1.0,
        gamma=2.0,
        M1=M1 * math.sqrt(n),
        M3=float(n) ** 2 * horizon,
        psi=MonomialFn(1.0, 1.0, 1.0),
    )
    local = CertificateLocal(
        gamma=2.0,
        lam=1.0,
        gamma0=0.0,
        alpha=0.0,
        M1=M1 * math.sqrt(n),
        M2=float(n) * horizon,
        psi=MonomialFn(0.0, 1.0, 1.0),
        psi0=MonomialFn(0.0, 1.0, 1.0),
    )
    return FixtureBundle(
        name="eq41",
        spec=spec,
        terminal=_terminal_tanh(M1),
        local=local,
        global_=global_,
        params={"n": n, "M1": M1, "horizon": horizon},
    )


def _fixture_bounded_sine_mf(
    n: int = 2,
    gamma: float = 1.0,
    K: float = 0.5,
    terminal: str = "brownian",
    M1: float = 1.0,
) -> FixtureBundle:
    """Diagonal quadratic rows plus a bounded sine of the mean-field size.

    f^i = (gamma/2)|z^i|^2 + K sin(W1(mu, d0)); the law enters only through
    the Y marginal, as the Picard scheme requires.
    """

    def evaluate(t, y, z, law, aux):
        rows = _row_norms(z)
        w1 = law.w_y(1) if law is not None else 0.0
        return 0.5 * gamma * rows**2 + K * math.sin(w1)

    spec = GeneratorSpec(n=n, d=n, evaluate=evaluate, law_dependence="y_only")
    convex = CertificateConvex(K=K, gamma=gamma, convexity=("convex",) * n)
    if terminal == "brownian":
        term, local = _terminal_brownian(), None
    elif terminal == "tanh":
        term = _terminal_tanh(M1)
        local = CertificateLocal(
            gamma=gamma,
            lam=0.0,
            gamma0=0.0,
            alpha=0.0,
            M1=M1 * math.sqrt(n),
            M2=0.0,
            psi0=MonomialFn(0.0, K, 1.0),
        )
    else:
        raise FixtureError(f"unknown terminal kind {terminal!r}")
    return FixtureBundle(
        name="bounded_sine_mf",
        spec=spec,
        terminal=term,
        convex=convex,
        local=local,
        params={"n": n, "gamma": gamma, "K": K, "terminal": terminal, "M1": M1},
    )


def _fixture_volterra_demo(gamma: float = 1.0, clamp: float = 10.0) -> FixtureBundle:
    """Inner quadratic driver plus a clamped delayed mean term.

    f = (gamma/2)|z|^2 and g(s, y-history, z, mu) = clamp(E[Y_s], +-clamp).
    """

    def evaluate(t, y, z, law, aux):
        return 0.5 * gamma * _row_norms(z) ** 2

    def g(k, y_hist, z, law):
        mean = float(y_hist[:, k, 0].mean())
        return np.full((y_hist.shape[0], 1), np.clip(mean, -clamp, clamp))

    spec = GeneratorSpec(n=1, d=1, evaluate=evaluate, law_dependence="none")
    return FixtureBundle(
        name="volterra_demo",
        spec=spec,
        terminal=_terminal_brownian(),
        convex=CertificateConvex(K=0.0, gamma=gamma),
        volterra=CertificateVolterra(C=1.0, gamma=gamma, bounded_g=True),
        g=g,
        oracle="cole_hopf",
        params={"gamma": gamma, "clamp": clamp},
    )


_REGISTRY: dict[str, Callable[..., FixtureBundle]] = {
    "pure_quadratic": _fixture_pure_quadratic,
    "linear_mf": _fixture_linear_mf,
    "remark31": _fixture_remark31,
    "eq41": _fixture_eq41,
    "bounded_sine_mf": _fixture_bounded_sine_mf,
    "volterra_demo": _fixture_volterra_demo,
}


def fixture_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def fixture(name: str, **params) -> FixtureBundle:
    """Build a registered fixture with certificate-compatible parameters."""
    try:
        builder = _REGISTRY[name]
    except KeyError:
        raise FixtureError(f"unknown fixture {name!r}; known: {', '.join(fixture_names())}")
    return builder(**params)


# ---------------------------------------------------------------------------
# Growth audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GrowthViolation:
    where: dict
    lhs: float
    rhs: float


@dataclass(frozen=True)
class GrowthReport:
    checked: int
    violations: tuple[GrowthViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _certificate_bound(cert, z_rows: np.ndarray, y_norm: np.ndarray, component: int, w1: float, w2: float, zeta: float) -> np.ndarray:
    own = z_rows[:, component]
    others = z_rows.sum(axis=1) - own
    if isinstance(cert, CertificateLocal):
        cross = np.sum(z_rows ** (1.0 + cert.alpha), axis=1) - own ** (1.0 + cert.alpha)
        return (
            zeta
            + cert.psi(y_norm)
            + 0.5 * cert.gamma * own**2
            + cert.lam * cross
            + cert.psi0(w1)
            + cert.gamma0 * w2 ** (1.0 + cert.alpha)
        )
    if isinstance(cert, CertificateGlobal):
        del others
        return zeta + cert.L * y_norm + 0.5 * cert.gamma * own**2 + cert.L * w1
    if isinstance(cert, CertificateConvex):
        return zeta + cert.K * y_norm + 0.5 * cert.gamma * own**2 + cert.K * w1
    raise CertificateError(f"no growth audit for certificate type {type(cert).__name__}")


def check_growth(
    spec: GeneratorSpec,
    cert,
    budget: int = 10_000,
    seed: int = 20260814,
    radius: float = 5.0,
) -> GrowthReport:
    """Random-sampling audit of the certificate's growth bound.

    Draws batches of (t, y, z) around synthetic particle laws of varying
    radius and checks |f^i| against the certified right side pointwise.
    An empty violation list is evidence, not proof.
    """
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    batches = 25
    per = max(1, budget // batches)
    checked = 0
    violations: list[GrowthViolation] = []
    w1_order = 1 if isinstance(cert, CertificateConvex) else 2
    for b in range(batches):
        t = float(gen.uniform(0.0, 1.0))
        scale = float(gen.uniform(0.05, radius))
        y = gen.uniform(-scale, scale, size=(per, spec.n))
        z = gen.uniform(-scale, scale, size=(per, spec.n, spec.d))
        law_y = gen.normal(0.0, scale, size=(64, spec.n))
        law_z = gen.normal(0.0, scale, size=(64, spec.n * spec.d))
        law = MeasureView(law_y, law_z)
        vals = spec.evaluate(t, y, z, law, None)
        z_rows = np.linalg.norm(z, axis=2)
        y_norm = np.linalg.norm(y, axis=1)
        w1 = law.w_y(w1_order)
        w2 = law.w_z(2)
        for i in range(spec.n):
            bound = _certificate_bound(cert, z_rows, y_norm, i, w1, w2, spec.zeta_level)
            bad = np.abs(vals[:, i]) > bound * (1.0 + 1e-12)
            checked += per
            for idx in np.flatnonzero(bad)[:3]:
                violations.append(
                    GrowthViolation(
                        where={"batch": b, "component": i, "t": t, "y": y[idx].tolist(), "z": z[idx].tolist()},
                        lhs=float(abs(vals[idx, i])),
                        rhs=float(bound[idx]),
                    )
                )
    return GrowthReport(checked=checked, violations=tuple(violations))
