"""Dwell-time bounds, error envelopes and configuration checks for the
relay/explorer switched system."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import max_singular_value, sym_eig_extremes


@dataclass
class DwellParams:
    V_T: float
    x_g_bar: float
    d_bar: float
    s_max_A: float
    kappa: float
    tau: float
    n_steps: int
    Ts: float


def kappa(s_max_A: float, x_g_bar: float, d_bar: float) -> float:
    return s_max_A * x_g_bar + d_bar


def max_dwell_time(s_max_A: float, V_T: float, kappa: float) -> float:
    """Longest service gap keeping the estimation error below ``V_T``.

    ``(1/s) ln(V_T s / kappa + 1)``, with the ``s -> 0`` limit ``V_T / kappa``.
    """
    if not V_T > 0:
        raise ValueError("V_T must be positive")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if s_max_A < 0:
        raise ValueError("S_max(A) cannot be negative")
    x = V_T / kappa
    r = s_max_A * x
    # x * log1p(r)/r stays accurate as s_max_A -> 0
    return x if r == 0 else x * (math.log1p(r) / r)


def dwell_steps(tau: float, Ts: float) -> int:
    """Number of whole sampling periods that fit in ``tau``."""
    if not Ts > 0:
        raise ValueError("Ts must be positive")
    n = int(math.floor(tau / Ts))
    # guard against tau/Ts landing a hair under an integer
    if (n + 1) * Ts <= tau:
        n += 1
    return n


def dwell_params(s_max_A: float, V_T: float, x_g_bar: float, d_bar: float, Ts: float) -> DwellParams:
    k = kappa(s_max_A, x_g_bar, d_bar)
    tau = max_dwell_time(s_max_A, V_T, k)
    return DwellParams(V_T=V_T, x_g_bar=x_g_bar, d_bar=d_bar, s_max_A=s_max_A, kappa=k,
                       tau=tau, n_steps=dwell_steps(tau, Ts), Ts=Ts)


def phi_bound(t: float, t_s: float, kappa: float, s_max_A: float) -> float:
    """Envelope on ``||e_1(t)||`` after a reset at ``t_s``."""
    if t < t_s:
        raise ValueError("t precedes the service instant")
    dt = t - t_s
    q = s_max_A * dt
    return kappa * dt if q == 0 else kappa * dt * (math.expm1(q) / q)


def e2_envelope(lam_min: float, lam_max: float, k: float, e2_at_service: float, dt: float) -> float:
    """Exponential bound on ``||e_2||`` a time ``dt`` after a service."""
    _check_spectrum(lam_min, lam_max, k)
    return math.sqrt(lam_max / lam_min) * e2_at_service * math.exp(-k * dt / (2.0 * lam_max))


def ei_envelope(lam_min: float, lam_max: float, k: float, rho: float, e_at_0: float, t: float) -> float:
    """Ultimate-boundedness envelope on the tracking error ``||e_i(t)||``."""
    _check_spectrum(lam_min, lam_max, k)
    decay = math.exp(-k * t / (2.0 * lam_max))
    return (lam_max * rho) / (lam_min * k) * (1.0 - decay) + math.sqrt(lam_max / lam_min) * e_at_0 * decay


def error_envelopes(P_extremes, k: float, e2_at_service: float, e_i_at_0: float, rho: float,
                    t: float, t_s: float = 0.0) -> tuple[float, float]:
    """``(e2_bound, ei_bound)`` at time ``t`` (``t_s`` is the last service instant)."""
    lam_min, lam_max = P_extremes
    return (e2_envelope(lam_min, lam_max, k, e2_at_service, t - t_s),
            ei_envelope(lam_min, lam_max, k, rho, e_i_at_0, t))


def ultimate_bound(lam_min: float, lam_max: float, k: float, rho: float) -> float:
    """``lambda_max(P) rho / (lambda_min(P) k)``."""
    _check_spectrum(lam_min, lam_max, k)
    return lam_max * rho / (lam_min * k)


def _check_spectrum(lam_min: float, lam_max: float, k: float) -> None:
    if not (lam_min > 0 and lam_max >= lam_min):
        raise ValueError(f"invalid spectrum of P: ({lam_min}, {lam_max})")
    if not k > 0:
        raise ValueError("k must be positive")


def rho_values(d_bar: float, P, A, B, V_T: float, x_g_bar: float) -> tuple[float, float]:
    """``(rho, rho_star)``; ``rho_star`` drops the ``V_T`` term."""
    P = np.asarray(P, float)
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    base = 2.0 * d_bar * max_singular_value(P) + 2.0 * max_singular_value(P @ A) * x_g_bar
    rho = base + 2.0 * V_T * max_singular_value(P @ B @ B.T @ P)
    return rho, base


@dataclass
class BoundReport:
    lambda_min_P: float
    lambda_max_P: float
    s_max_A: float
    s_max_C: float
    rho: list
    rho_star: list
    ultimate_bound: list
    ultimate_bound_star: list
    dwell: list
    conditions: dict = field(default_factory=dict)
    preconditions_ok: bool = False
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def validate_config(*, A, B, C, P, k: float, d_bars, x_g, V_T: float, R: float, eta: float,
                    R_f: float, Ts: float) -> BoundReport:
    """Check the finite-termination preconditions and report every intermediate quantity.

    Conditions: ``0 < V_T <= (R - eta)/S_max(C)``, ``0 <= eta < R``,
    ``Lambda(rho) S_max(C) < R_f`` for every explorer, and ``n_i >= 1`` for
    every explorer.
    """
    lam_min, lam_max = sym_eig_extremes(P)
    s_A = max_singular_value(A)
    s_C = max_singular_value(C)
    x_g_bar = float(np.linalg.norm(x_g))
    rhos, rho_stars, ubs, ubs_star, dwells = [], [], [], [], []
    for d in d_bars:
        rho, rho_s = rho_values(d, P, A, B, V_T, x_g_bar)
        rhos.append(rho)
        rho_stars.append(rho_s)
        ubs.append(ultimate_bound(lam_min, lam_max, k, rho))
        ubs_star.append(ultimate_bound(lam_min, lam_max, k, rho_s))
        dwells.append(asdict(dwell_params(s_A, V_T, x_g_bar, d, Ts)) if V_T > 0 else None)

    v_t_max = (R - eta) / s_C if s_C > 0 else math.inf
    conditions = {
        "V_T_range": bool(0 < V_T <= v_t_max),
        "eta_range": bool(0 <= eta < R),
        "ultimate_bound_in_goal": bool(all(ub * s_C < R_f for ub in ubs)),
        "dwell_steps_positive": bool(all(d is not None and d["n_steps"] >= 1 for d in dwells)),
    }
    failures = []
    if not conditions["V_T_range"]:
        failures.append(f"V_T={V_T} outside (0, {v_t_max}]")
    if not conditions["eta_range"]:
        failures.append(f"eta={eta} outside [0, {R})")
    if not conditions["ultimate_bound_in_goal"]:
        worst = max(ubs) * s_C
        failures.append(f"Lambda(rho)*S_max(C)={worst:.6g} is not below R_f={R_f}")
    if not conditions["dwell_steps_positive"]:
        failures.append("some explorer has n_i < 1 (dwell time shorter than Ts)")
    return BoundReport(
        lambda_min_P=lam_min, lambda_max_P=lam_max, s_max_A=s_A, s_max_C=s_C,
        rho=rhos, rho_star=rho_stars, ultimate_bound=ubs, ultimate_bound_star=ubs_star,
        dwell=dwells, conditions=conditions, preconditions_ok=not failures, failures=failures,
    )
