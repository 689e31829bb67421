"""Explicit constants: radii, window lengths, envelopes, Picard parameters.

Everything here is a closed form or a monotone scalar root. Quantities
that can exceed float64 range (the quadratic-variation radius K2 and the
envelope-level J2) carry a log-scale companion which is the authoritative
value once the linear one saturates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .generators import CertificateGlobal, CertificateLocal, MonomialFn

_LOG_HUGE = 709.0  # exp overflows just above this


class ConstantsError(ValueError):
    pass


class WindowEquationError(ConstantsError):
    """The window equation has no positive root (degenerate certificate)."""


def m_const(n: int, lam: float, alpha: float) -> float:
    """Young-inequality constant ((1-a)/2) (1+a)^((1+a)/(1-a)) (n lam)^(2/(1-a))."""
    if not 0 <= alpha < 1:
        raise ConstantsError("alpha must lie in [0, 1)")
    if n < 1 or lam < 0:
        raise ConstantsError("need n >= 1 and lam >= 0")
    a = float(alpha)
    return ((1.0 - a) / 2.0) * (1.0 + a) ** ((1.0 + a) / (1.0 - a)) * (n * lam) ** (2.0 / (1.0 - a))


def local_radii(cert: CertificateLocal, n: int) -> tuple[float, float]:
    """Sup radius K1 and quadratic-variation radius K2 of the invariant ball."""
    k1, _, k2 = _radii_with_log(cert, n)
    return k1, k2


def _radii_with_log(cert: CertificateLocal, n: int) -> tuple[float, float, float]:
    if n < 1:
        raise ConstantsError("need at least one component")
    g = cert.gamma
    k1 = (2.0 * n / g) * math.log(2.0) + 2.0 * n * (cert.M1 + cert.M2)
    log_t1 = math.log(2.0 * n / g**2) + 2.0 * g * cert.M1
    log_t2 = math.log((2.0 * n / g) * (1.0 + 2.0 * cert.M2)) + 2.0 * g * k1
    log_k2 = float(np.logaddexp(log_t1, log_t2))
    k2 = math.exp(log_k2) if log_k2 < _LOG_HUGE else math.inf
    return k1, log_k2, k2


@dataclass(frozen=True)
class LocalConstants:
    """Window data: radii, both root lengths, and bisection residuals."""

    K1: float
    K2: float
    log_K2: float
    m_nla: float
    x1: float
    x2: float
    eps: float
    residual_x1: float
    residual_x2: float


def _solve_power_equation(log_lin: float, log_pow: float, s: float, rhs_log: float) -> tuple[float, float]:
    """Root of exp(log_lin) * x + exp(log_pow) * x^s = exp(rhs_log), x > 0.

    Coefficients live in log scale so envelope-level certificates cannot
    overflow. The left side is strictly increasing from zero, so a
    log-domain bisection always converges; the returned residual is
    relative to the right side (which matches the absolute residual for
    order-one scales).
    """
    has_lin = math.isfinite(log_lin)
    has_pow = math.isfinite(log_pow)
    if not has_lin and not has_pow:
        raise WindowEquationError("all window-equation coefficients vanish")

    def log_lhs(u: float) -> float:
        if not has_pow:
            return log_lin + u
        if not has_lin:
            return log_pow + s * u
        return float(np.logaddexp(log_lin + u, log_pow + s * u))

    # Closed forms when only one term survives.
    if not has_pow:
        u = rhs_log - log_lin
    elif not has_lin:
        u = (rhs_log - log_pow) / s
    else:
        lo = min(rhs_log - log_lin, (rhs_log - log_pow) / s) - 5.0
        hi = max(rhs_log - log_lin, (rhs_log - log_pow) / s) + 5.0
        while log_lhs(lo) > rhs_log:
            lo -= 50.0
        while log_lhs(hi) < rhs_log:
            hi += 50.0
        for _ in range(500):
            mid = 0.5 * (lo + hi)
            if log_lhs(mid) < rhs_log:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-16 * max(1.0, abs(mid)):
                break
        u = 0.5 * (lo + hi)
    residual = abs(math.expm1(log_lhs(u) - rhs_log))
    return math.exp(u), residual


def local_window(cert: CertificateLocal, n: int) -> LocalConstants:
    """Certified window length: eps = min(x1, x2) from the two budgets.

    x1 keeps the drift contribution inside K1/2, x2 keeps the quadratic
    variation contribution inside K2/2:

      n(psi+psi0)(K1) x1 + n g0 K2^((1+a)/2) x1^((1-a)/2)
          + n g^((1+a)/(1-a)) M K2^((1+a)/(1-a)) x1 = K1 / 2,
      2(psi+psi0)(K1) x2 + 2 g0 K2^((1+a)/2) x2^((1-a)/2)
          + 2 M K2^((1+a)/(1-a)) x2 = (g K2 / 2n) exp(-2 g K1).
    """
    a = cert.alpha
    g = cert.gamma
    k1, log_k2, k2 = _radii_with_log(cert, n)
    mnla = m_const(n, cert.lam, a)
    s = (1.0 - a) / 2.0
    exp_hi = (1.0 + a) / (1.0 - a)
    psi_k1 = cert.psi(k1) + cert.psi0(k1)

    def pow_coef_log(front: float) -> float:
        # front * gamma0 * K2^((1+a)/2)
        if front <= 0.0 or cert.gamma0 <= 0.0:
            return -math.inf
        return math.log(front * cert.gamma0) + 0.5 * (1.0 + a) * log_k2

    def quad_coef_log(front: float, with_gamma_power: bool) -> float:
        # front * [gamma^exp_hi] * M * K2^exp_hi
        if front <= 0.0 or mnla == 0.0:
            return -math.inf
        log_c = math.log(front * mnla) + exp_hi * log_k2
        if with_gamma_power:
            log_c += exp_hi * math.log(g)
        return log_c

    def lin_log(front: float, with_gamma_power: bool) -> float:
        drift = math.log(front * psi_k1) if psi_k1 > 0.0 else -math.inf
        return float(np.logaddexp(drift, quad_coef_log(front, with_gamma_power)))

    rhs1_log = math.log(k1 / 2.0)
    x1, res1 = _solve_power_equation(lin_log(float(n), True), pow_coef_log(float(n)), s, rhs1_log)

    rhs2_log = math.log(g / (2.0 * n)) + log_k2 - 2.0 * g * k1
    x2, res2 = _solve_power_equation(lin_log(2.0, False), pow_coef_log(2.0), s, rhs2_log)

    return LocalConstants(
        K1=k1,
        K2=k2,
        log_K2=log_k2,
        m_nla=mnla,
        x1=x1,
        x2=x2,
        eps=min(x1, x2),
        residual_x1=res1,
        residual_x2=res2,
    )


# ---------------------------------------------------------------------------
# Global stitching constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeRecord:
    """eta(t) = (n C + b/a) exp(a (T - t)) - b/a with a = C(2n+1), b = n C."""

    a: float
    b: float
    terminal: float
    horizon: float

    def __call__(self, t):
        shift = self.b / self.a
        return (self.terminal + shift) * np.exp(self.a * (self.horizon - np.asarray(t))) - shift


@dataclass(frozen=True)
class GlobalConstants:
    c_tilde: float
    eta: EnvelopeRecord
    kappa: float
    delta_kappa: float
    J1: float
    J2: float
    log_J2: float
    window: LocalConstants


def kappa_local_certificate(cert: CertificateGlobal, kappa: float, horizon: float) -> CertificateLocal:
    """Small-window certificate at the envelope level sqrt(kappa).

    The linear growth L|y| + L W2(mu1, d0) maps onto psi and psi0, the
    terminal bound becomes sqrt(kappa), and the integral bound of zeta is
    kept from the certificate via Cauchy-Schwarz on M3.
    """
    return CertificateLocal(
        gamma=cert.gamma,
        lam=0.0,
        gamma0=0.0,
        alpha=0.0,
        M1=math.sqrt(kappa),
        M2=math.sqrt(horizon * cert.M3),
        psi=MonomialFn(0.0, cert.L, 1.0),
        psi0=MonomialFn(0.0, cert.L, 1.0),
    )


def global_ode(cert: CertificateGlobal, n: int, horizon: float) -> GlobalConstants:
    """Envelope ODE in closed form plus the stitching window at level kappa.

    C = M1^2 + M3 + 3 L^2 + 2; eta solves eta' = -C(2n+1) eta - n C with
    eta(T) = n C, and kappa = eta(0). Feasibility requires ||xi||^2 <= n C.
    """
    if horizon <= 0:
        raise ConstantsError("horizon must be positive")
    c = cert.M1**2 + cert.M3 + 3.0 * cert.L**2 + 2.0
    a = c * (2.0 * n + 1.0)
    b = n * c
    eta = EnvelopeRecord(a=a, b=b, terminal=n * c, horizon=horizon)
    kappa = float(eta(0.0))
    if cert.M1**2 > n * c:
        raise ConstantsError("terminal bound exceeds the envelope at T")
    window = local_window(kappa_local_certificate(cert, kappa, horizon), n)
    j1 = math.sqrt(kappa)
    g = cert.gamma
    # J2 = 2n phi(M1) + 2n phi'(J1) (sqrt(T M3) + 2 L J1 T), in log scale
    # when the exponential leaves float64 range.
    inner = math.sqrt(horizon * cert.M3) + 2.0 * cert.L * j1 * horizon
    log_phi_p = _log_phi_prime_mag(g, j1)
    base = 2.0 * n * phi(g, cert.M1)
    if inner > 0.0 and math.isfinite(log_phi_p):
        log_term = math.log(2.0 * n * inner) + log_phi_p
        log_j2 = float(np.logaddexp(math.log(base) if base > 0 else -math.inf, log_term))
    else:
        log_j2 = math.log(base) if base > 0 else -math.inf
    j2 = math.exp(log_j2) if log_j2 < _LOG_HUGE else math.inf
    return GlobalConstants(
        c_tilde=c,
        eta=eta,
        kappa=kappa,
        delta_kappa=window.eps,
        J1=j1,
        J2=j2,
        log_J2=log_j2,
        window=window,
    )


# ---------------------------------------------------------------------------
# Test function phi and Picard-scheme constants
# ---------------------------------------------------------------------------


def phi(gamma: float, x):
    """phi(x) = (exp(g|x|) - g|x| - 1) / g^2; phi'' - g |phi'| = 1."""
    ax = gamma * np.abs(np.asarray(x, dtype=np.float64))
    return (np.expm1(ax) - ax) / gamma**2


def phi_prime(gamma: float, x):
    x = np.asarray(x, dtype=np.float64)
    return np.expm1(gamma * np.abs(x)) / gamma * np.sign(x)


def phi_double_prime(gamma: float, x):
    return np.exp(gamma * np.abs(np.asarray(x, dtype=np.float64)))


def _log_phi_prime_mag(gamma: float, x: float) -> float:
    e = gamma * abs(x)
    if e > _LOG_HUGE:
        return e - math.log(gamma)
    val = abs(math.expm1(e)) / gamma
    return math.log(val) if val > 0 else -math.inf


def picard_ratio_bound(q: float) -> float:
    """R(q) = (q/(q-1))^(2q), the reverse-Hoelder constant; R(2) = 16."""
    if q <= 1:
        raise ConstantsError("q must exceed 1")
    return (q / (q - 1.0)) ** (2.0 * q)


@dataclass(frozen=True)
class ThetaConstants:
    """Parameters of the convergence proof for the Picard scheme."""

    q: float
    R_q: float
    eps: float | None
    m0: int | None
    eps_star: float | None
    n0: int | None

    @staticmethod
    def R(q: float) -> float:
        return picard_ratio_bound(q)


def _step_count(rate: float, horizon: float) -> int:
    # Unique positive integer m with rate*T <= m < rate*T + 1.
    m = math.ceil(rate * horizon)
    return max(1, m)


def theta_consts(K: float, n: int, horizon: float, q: float = 2.0) -> ThetaConstants:
    """Stage counts for the Picard scheme; K = 0 skips the windowing."""
    if K < 0 or n < 1 or horizon <= 0:
        raise ConstantsError("need K >= 0, n >= 1, horizon > 0")
    r_q = picard_ratio_bound(q)
    if K == 0.0:
        return ThetaConstants(q=q, R_q=r_q, eps=None, m0=None, eps_star=None, n0=None)
    eps = 1.0 / (4.0 * n * K)
    eps_star = 1.0 / (16.0 * n * K)
    return ThetaConstants(
        q=q,
        R_q=r_q,
        eps=eps,
        m0=_step_count(4.0 * n * K, horizon),
        eps_star=eps_star,
        n0=_step_count(16.0 * n * K, horizon),
    )


def volterra_weight(C: float, horizon: float) -> float:
    """Weight exponent beta = 32 C^2 T of the contraction norm."""
    if C < 0 or horizon <= 0:
        raise ConstantsError("need C >= 0 and horizon > 0")
    return 32.0 * C**2 * horizon
