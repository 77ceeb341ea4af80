"""Closed-form stability margins for the average-predictor feedback laws.

Everything here is diagnostic: the quantities certify exponential decay of
the closed loop when the mode-family mismatch is small enough and the
minimum dwell time large enough, but they never gate simulation (the
bounds are very conservative; stabilization is routinely observed far
outside them).

Notation used throughout the docstrings: ``lam(eps, tau)`` is the
mismatch-to-residual gain (zero at zero mismatch, decreasing in the
exactly-predicted horizon ``tau``), ``nu1/nu2`` the norm-equivalence
constants between the physical and target variables, ``beta`` the
per-mode decay rate floor, ``mu`` the jump factor across switches, and
``alpha`` the extra decay earned over each guaranteed-dwell window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .design import DesignResult
from .numerics import NormKind, induced_norm

__all__ = [
    "MarginConstants",
    "MarginReport",
    "mismatch_bound",
    "mismatch_bound_hat",
    "nu_constants",
    "eps_star",
    "eps_bar_star",
    "pointwise_rates",
    "rate_pipeline",
]


@dataclass(frozen=True)
class MarginConstants:
    """Norm maxima over the mode family (and the bar matrices) plus the delay."""

    M_A: float
    M_B: float
    M_K: float
    M_H: float
    Mbar_A: float
    Mbar_B: float
    D: float
    norm_kind: NormKind = NormKind.SPECTRAL

    def __post_init__(self):
        for name in ("M_A", "M_B", "M_K", "M_H", "Mbar_A", "Mbar_B"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.Mbar_A < self.M_A - 1e-12 or self.Mbar_B < self.M_B - 1e-12:
            raise ValueError("bar maxima must dominate the family maxima")
        if self.D <= 0:
            raise ValueError("D must be positive")

    @classmethod
    def from_design(cls, design: DesignResult, D: float,
                    norm_kind: NormKind | str | None = None) -> "MarginConstants":
        kind = NormKind.coerce(norm_kind) if norm_kind is not None else design.norm_kind
        p = design.p
        M_A = max(induced_norm(design.A_list[i], kind) for i in range(p))
        M_B = max(induced_norm(design.B_list[i].reshape(-1, 1), kind) for i in range(p))
        M_K = max(induced_norm(design.K_list[i].reshape(1, -1), kind) for i in range(p))
        M_H = max(induced_norm(design.A_list[i]
                               + np.outer(design.B_list[i], design.K_list[i]), kind)
                  for i in range(p))
        Mbar_A = max(induced_norm(design.A_bar, kind), M_A)
        Mbar_B = max(induced_norm(design.B_bar.reshape(-1, 1), kind), M_B)
        return cls(M_A=M_A, M_B=M_B, M_K=M_K, M_H=M_H,
                   Mbar_A=Mbar_A, Mbar_B=Mbar_B, D=float(D), norm_kind=kind)


def _mismatch_core(eps: float, tau: float, MA: float, MB: float,
                   consts: MarginConstants) -> float:
    if eps < 0:
        raise ValueError("mismatch must be nonnegative")
    D = consts.D
    if tau < -1e-12 or tau > D + 1e-9:
        raise ValueError(f"tau = {tau} outside [0, {D}]")
    tau = min(max(tau, 0.0), D)
    horizon = D - tau
    delta1 = max(1.0, MB) * (consts.M_K * horizon + 1.0)
    delta2 = 2.0 * consts.M_K * MB * horizon + eps + consts.M_K + MB
    arg = (MA + eps) * D
    if arg > 700.0:  # would overflow exp; only reachable while bracketing inverses
        return math.inf
    return eps * math.exp(arg) * max(delta1, delta2)


def mismatch_bound(eps: float, tau: float, consts: MarginConstants) -> float:
    """Residual gain for the average-predictor law.

    Uses the bar-dominated maxima; zero at zero mismatch, strictly
    increasing in ``eps`` and non-increasing in ``tau``.
    """
    return _mismatch_core(eps, tau, consts.Mbar_A, consts.Mbar_B, consts)


def mismatch_bound_hat(eps_bar: float, tau: float, consts: MarginConstants) -> float:
    """Residual gain for the averaging-of-predictors law (family maxima)."""
    return _mismatch_core(eps_bar, tau, consts.M_A, consts.M_B, consts)


def nu_constants(consts: MarginConstants) -> tuple[float, float]:
    """Norm-equivalence constants between (X, U) and (X, W) windows.

    ``nu1`` carries the closed-loop maximum in the exponent, ``nu2`` the
    open-loop one.  Both are >= 2 by construction.
    """
    D, MK, MB = consts.D, consts.M_K, consts.M_B
    nu1 = max(4.0 * MK**2 * D * math.exp(2.0 * consts.M_H * D) + 1.0,
              4.0 * MK**2 * D**2 * math.exp(2.0 * consts.M_H * D) * MB**2 + 2.0)
    nu2 = max(4.0 * MK**2 * D * math.exp(2.0 * consts.M_A * D) + 1.0,
              4.0 * MK**2 * D**2 * math.exp(2.0 * consts.M_A * D) * MB**2 + 2.0)
    return nu1, nu2


def _invert_increasing(fn, target: float, hi: float = 1e3, iters: int = 200) -> float:
    """Bisection inverse of a continuous, strictly increasing fn with fn(0) = 0."""
    if target <= 0:
        return 0.0
    if not math.isfinite(target):
        return math.inf
    lo = 0.0
    while fn(hi) < target:
        hi *= 10.0
        if hi > 1e12:
            return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _certificate_scalars(design: DesignResult, kind: NormKind):
    p = design.p
    lam_min_Q = np.array([np.min(np.linalg.eigvalsh(design.Q_list[i])) for i in range(p)])
    lam_min_S = np.array([np.min(np.linalg.eigvalsh(design.S_list[i])) for i in range(p)])
    lam_max_S = np.array([np.max(np.linalg.eigvalsh(design.S_list[i])) for i in range(p)])
    SB = np.array([induced_norm((design.S_list[i] @ design.B_list[i]).reshape(-1, 1), kind)
                   for i in range(p)])
    return lam_min_Q, lam_min_S, lam_max_S, SB


def eps_star(design: DesignResult, consts: MarginConstants) -> float:
    """Largest certified mismatch radius for the average-predictor law.

    Inverts ``lam(., 0)`` at the two thresholds that keep the target
    system's Lyapunov drift negative, and takes the smaller root.
    """
    nu1, _ = nu_constants(consts)
    D = consts.D
    lam_min_Q, _, _, SB = _certificate_scalars(design, consts.norm_kind)
    ratio = np.where(SB > 0, lam_min_Q / np.where(SB > 0, SB, 1.0), np.inf)
    t1 = 1.0 / math.sqrt(2.0 * math.exp(D) * D * nu1)
    t2 = float(np.min(ratio)) / math.sqrt(2.0 * math.exp(D) * D * (nu1 + 1.0))
    inv = lambda y: _invert_increasing(lambda e: mismatch_bound(e, 0.0, consts), y)
    return min(inv(t1), inv(t2))


def eps_bar_star(design: DesignResult, consts: MarginConstants) -> float:
    """Pairwise-mismatch analogue of :func:`eps_star` (averaging law)."""
    nu1, _ = nu_constants(consts)
    D = consts.D
    lam_min_Q, _, _, SB = _certificate_scalars(design, consts.norm_kind)
    ratio = np.where(SB > 0, lam_min_Q / np.where(SB > 0, SB, 1.0), np.inf)
    t1 = 1.0 / math.sqrt(2.0 * math.exp(D) * D * nu1)
    t2 = float(np.min(ratio)) / math.sqrt(2.0 * math.exp(D) * D * (nu1 + 1.0))
    inv = lambda y: _invert_increasing(lambda e: mismatch_bound_hat(e, 0.0, consts), y)
    return min(inv(t1), inv(t2))


def pointwise_rates(design: DesignResult, consts: MarginConstants,
                    eps_used: float, tau: float, hat: bool = False) -> np.ndarray:
    """Per-mode decay rate of the Lyapunov functional at horizon ``tau``."""
    lam = (mismatch_bound_hat if hat else mismatch_bound)(eps_used, tau, consts)
    nu1, _ = nu_constants(consts)
    D = consts.D
    lam_min_Q, _, lam_max_S, SB = _certificate_scalars(design, consts.norm_kind)
    b = 2.0 * SB**2 / lam_min_Q
    branch1 = 1.0 - 2.0 * math.exp(D) * lam**2 * D * nu1
    branch2 = (0.5 * lam_min_Q - 2.0 * b * math.exp(D) * lam**2 * (D * nu1 + 1.0)) / lam_max_S
    return np.minimum(branch1, branch2)


@dataclass
class MarginReport:
    """Every closed-form margin quantity, plus the assumptions they carry."""

    eps: float
    eps_bar: float
    nu1: float
    nu2: float
    eps_star: float
    eps_bar_star: float
    beta: float
    beta_bar: float
    mu: float
    alpha: float
    alpha_bar: float
    tau_d_star: float
    tau_bar_d_star: float
    rho: float
    xi: float
    xi_bar: float
    feasible: bool
    feasible_bar: bool
    eps_used: float
    eps_bar_used: float
    tau_d: float
    tau_bar_d: float
    norm_kind: NormKind
    assumptions: str

    def to_json_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "eps", "eps_bar", "nu1", "nu2", "eps_star", "eps_bar_star",
            "beta", "beta_bar", "mu", "alpha", "alpha_bar",
            "tau_d_star", "tau_bar_d_star", "rho", "xi", "xi_bar",
            "feasible", "feasible_bar", "eps_used", "eps_bar_used",
            "tau_d", "tau_bar_d", "assumptions")}
        d["norm_kind"] = self.norm_kind.value
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)

    def report(self) -> str:
        f = lambda v: f"{v:.6g}" if np.isfinite(v) else "infeasible"
        lines = [
            "margin report",
            f"  assumptions: {self.assumptions}",
            f"  eps / eps_bar           : {self.eps:.6g} / {self.eps_bar:.6g}",
            f"  nu1 / nu2               : {self.nu1:.6g} / {self.nu2:.6g}",
            f"  eps_star / eps_bar_star : {self.eps_star:.6g} / {self.eps_bar_star:.6g}",
            f"  beta / beta_bar         : {f(self.beta)} / {f(self.beta_bar)}",
            f"  mu                      : {self.mu:.6g}",
            f"  alpha / alpha_bar       : {f(self.alpha)} / {f(self.alpha_bar)}",
            f"  tau_d_star / tau_bar_d* : {f(self.tau_d_star)} / {f(self.tau_bar_d_star)}",
            f"  rho                     : {self.rho:.6g}",
            f"  xi / xi_bar             : {f(self.xi)} / {f(self.xi_bar)}",
            f"  feasible (beta > 0)     : {self.feasible} / {self.feasible_bar}",
        ]
        return "\n".join(lines)


def _branch_pipeline(design, consts, eps_used, tau_d, tau_bar_d, hat, scalars, nu1):
    """beta, alpha, tau_d_star, xi, feasible for one law (plain or hat)."""
    lam_min_Q, lam_min_S, lam_max_S, SB = scalars
    D = consts.D
    rates0 = pointwise_rates(design, consts, eps_used, 0.0, hat=hat)
    beta = float(np.min(rates0))
    b = 2.0 * SB**2 / lam_min_Q
    kappa1 = float(np.min(np.minimum(lam_min_S, b)))
    kappa2 = float(np.max(np.maximum(lam_max_S, b * math.exp(D))))
    mu = kappa2 / kappa1

    if beta <= 0.0:
        return beta, math.nan, math.nan, math.nan, mu, False

    # extra decay over one guaranteed-dwell window; the horizon decays
    # linearly (clamped at D), so the integrand depends on k only through
    # the window offset
    s_grid = np.linspace(0.0, tau_d, 1001)
    tau_of_s = np.minimum(tau_d - s_grid, D)
    p = design.p
    vals = np.empty((p, s_grid.size))
    for j, tv in enumerate(tau_of_s):
        vals[:, j] = pointwise_rates(design, consts, eps_used, float(tv), hat=hat)
    alpha = float(np.min([simpson(vals[i] - beta, x=s_grid) for i in range(p)]))

    tau_d_star = math.log(mu) / beta
    xi = 0.5 * (beta - math.log(mu) / tau_d + alpha / tau_bar_d)
    return beta, alpha, tau_d_star, xi, mu, True


def rate_pipeline(design: DesignResult, consts: MarginConstants,
                  eps_used: float, tau_d: float, tau_bar_d: float,
                  eps_bar_used: float | None = None) -> MarginReport:
    """Evaluate the complete margin pipeline at a caller-chosen mismatch.

    ``eps_used`` decouples the certified regime (values below the
    ``eps_star`` threshold, down to 0) from the diagnostic regime (the
    design's actual mismatch, where the bounds usually report infeasible).
    A nonpositive decay floor flags the report infeasible instead of
    raising.
    """
    if eps_used < 0:
        raise ValueError("eps_used must be nonnegative")
    if not (0 < tau_d <= tau_bar_d):
        raise ValueError("need 0 < tau_d <= tau_bar_d")
    if eps_bar_used is None:
        eps_bar_used = eps_used

    scalars = _certificate_scalars(design, consts.norm_kind)
    nu1, nu2 = nu_constants(consts)
    es = eps_star(design, consts)
    ebs = eps_bar_star(design, consts)

    beta, alpha, tds, xi, mu, feas = _branch_pipeline(
        design, consts, eps_used, tau_d, tau_bar_d, False, scalars, nu1)
    beta_b, alpha_b, tds_b, xi_b, _, feas_b = _branch_pipeline(
        design, consts, eps_bar_used, tau_d, tau_bar_d, True, scalars, nu1)

    rho = math.sqrt(2.0 * mu * nu1 * nu2)
    notes = (f"norm={consts.norm_kind.value}, eps_used={eps_used:.6g}, "
             f"eps_bar_used={eps_bar_used:.6g}, dwell=({tau_d:.6g}, {tau_bar_d:.6g})")
    if not feas:
        notes += "; infeasible at eps_used (decay floor beta <= 0)"
    if not feas_b:
        notes += "; infeasible at eps_bar_used (beta_bar <= 0)"

    return MarginReport(
        eps=design.eps, eps_bar=design.eps_bar, nu1=nu1, nu2=nu2,
        eps_star=es, eps_bar_star=ebs,
        beta=beta, beta_bar=beta_b, mu=mu, alpha=alpha, alpha_bar=alpha_b,
        tau_d_star=tds, tau_bar_d_star=tds_b, rho=rho, xi=xi, xi_bar=xi_b,
        feasible=feas, feasible_bar=feas_b,
        eps_used=eps_used, eps_bar_used=eps_bar_used,
        tau_d=tau_d, tau_bar_d=tau_bar_d,
        norm_kind=consts.norm_kind, assumptions=notes)
