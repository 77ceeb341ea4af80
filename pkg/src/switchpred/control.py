"""Predictor constructions and the four feedback laws.

Four controllers drive the delayed switched plant:

* ``AveragePredictor``     - predictor feedback for a designer-chosen
  average system, with an exact short-term prediction leg whose length is
  the guaranteed constant-mode horizon,
* ``AveragingPredictors``  - arithmetic mean of the per-mode exact
  predictor feedbacks,
* ``ExactOracle``          - the inapplicable exact predictor feedback
  (needs the future switching signal; simulation-only),
* ``OpenLoop``             - u = 0.

The functions in this module are the per-instant reference forms used by
tests and diagnostics; `plant.simulate` evaluates the same math in a fused
backend kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import switching
from .numerics import expm
from .plant import InputHistory, SwitchedPlantSpec, history_integral

__all__ = [
    "AveragePredictor",
    "AveragingPredictors",
    "ExactOracle",
    "OpenLoop",
    "ControllerSpec",
    "predict_short",
    "u1",
    "predict_mode",
    "u2",
    "exact_predictor",
    "u_exact",
    "residual_w",
    "evaluate",
]


@dataclass
class AveragePredictor:
    """Average-system predictor feedback (dwell-aware when ``dwell_known``)."""

    A_bar: np.ndarray
    B_bar: np.ndarray
    K_bar: np.ndarray
    dwell_known: bool = True
    tau_d: float | None = None
    delay: float | None = None  # differs from the plant D only in mismatch studies
    kind: str = field(default="average_predictor", init=False, repr=False)


@dataclass
class AveragingPredictors:
    """Mean of per-mode exact predictor feedbacks."""

    K_list: np.ndarray
    dwell_known: bool = True
    tau_d: float | None = None
    delay: float | None = None
    kind: str = field(default="averaging_predictors", init=False, repr=False)


@dataclass
class ExactOracle:
    """Exact predictor feedback; requires the future switching signal."""

    K_list: np.ndarray
    kind: str = field(default="exact_oracle", init=False, repr=False)


@dataclass
class OpenLoop:
    kind: str = field(default="open_loop", init=False, repr=False)


ControllerSpec = Union[AveragePredictor, AveragingPredictors, ExactOracle, OpenLoop]


def _controller_delay(spec: SwitchedPlantSpec, delay: float | None) -> float:
    D = spec.D if delay is None else float(delay)
    if D <= 0:
        raise ValueError("controller delay must be positive")
    return D


def predict_short(x, history: InputHistory, mode: int, tau: float,
                  spec: SwitchedPlantSpec, delay: float | None = None) -> np.ndarray:
    """Exact prediction of the state ``tau`` ahead in the current mode.

    ``x(t + tau) = e^{A tau} x + int_{t-D}^{t+tau-D} e^{A (t+tau-D-th)} B u(th) dth``
    with the mode's own matrices; ``tau`` must be grid aligned and within
    ``[0, D]``.
    """
    D = _controller_delay(spec, delay)
    if not -1e-12 <= tau <= D + 1e-12:
        raise ValueError(f"tau = {tau} outside [0, {D}]")
    A, B = spec.mode_matrices(mode)
    x = np.asarray(x, dtype=float).reshape(-1)
    if tau == 0.0:
        return x.copy()
    t = history.current_time
    conv = history_integral(history, A, B, t - D, t + tau - D, anchor=t + tau - D)
    return expm(A * tau) @ x + conv


def u1(x, history: InputHistory, mode: int, tau: float, spec: SwitchedPlantSpec,
       A_bar, B_bar, K_bar, delay: float | None = None) -> float:
    """Average-system predictor feedback at one instant.

    Propagates the exact short-term prediction with the average pair over
    the remaining ``D - tau`` and closes with the average gain.
    """
    D = _controller_delay(spec, delay)
    A_bar = np.asarray(A_bar, dtype=float)
    B_bar = np.asarray(B_bar, dtype=float).reshape(-1)
    K_bar = np.asarray(K_bar, dtype=float).reshape(-1)
    xp = predict_short(x, history, mode, tau, spec, delay)
    t = history.current_time
    conv = history_integral(history, A_bar, B_bar, t + tau - D, t, anchor=t)
    return float(K_bar @ (expm(A_bar * (D - tau)) @ xp + conv))


def predict_mode(x, history: InputHistory, mode_now: int, tau: float,
                 spec: SwitchedPlantSpec, i: int,
                 delay: float | None = None) -> np.ndarray:
    """Predictor state for target mode ``i``: exact short leg, then mode-i flow."""
    D = _controller_delay(spec, delay)
    A_i, B_i = spec.mode_matrices(i)
    xp = predict_short(x, history, mode_now, tau, spec, delay)
    t = history.current_time
    conv = history_integral(history, A_i, B_i, t + tau - D, t, anchor=t)
    return expm(A_i * (D - tau)) @ xp + conv


def u2(x, history: InputHistory, mode_now: int, tau: float,
       spec: SwitchedPlantSpec, K_list, delay: float | None = None) -> float:
    """Arithmetic mean of the per-mode predictor feedbacks."""
    K_arr = np.asarray(K_list, dtype=float).reshape(spec.p, spec.q)
    total = 0.0
    for i in range(1, spec.p + 1):
        total += float(K_arr[i - 1] @ predict_mode(x, history, mode_now, tau, spec, i, delay))
    return total / spec.p


def _require_oracle(signal: switching.SwitchingSignal, t: float, D: float):
    if signal.causal:
        raise ValueError("exact predictor needs the future switching signal; "
                         "the signal is marked causal")
    if signal.horizon + 1e-9 < t + D:
        raise ValueError(f"signal must cover [t, t+D] = [{t}, {t + D}]")


def exact_predictor(x, history: InputHistory, signal: switching.SwitchingSignal,
                    t: float, spec: SwitchedPlantSpec) -> np.ndarray:
    """The exact predictor ``P(t)``, i.e. ``X(t + D)`` written causally.

    Splits ``[t, t+D]`` at the future switch instants and propagates the
    state through each constant-mode piece (matrix exponential plus the
    convolution with the stored input), newest factor applied last; this
    is the descending-order product form evaluated sequentially.
    """
    D = spec.D
    _require_oracle(signal, t, D)
    x = np.asarray(x, dtype=float).reshape(-1)

    inside = signal.switch_times[(signal.switch_times > t + 1e-12)
                                 & (signal.switch_times < t + D - 1e-12)]
    bounds = np.concatenate(([t], inside, [t + D]))
    z = x
    for a, b in zip(bounds[:-1], bounds[1:]):
        A_m, B_m = spec.mode_matrices(switching.mode_at(signal, a))
        conv = history_integral(history, A_m, B_m, a - D, b - D, anchor=b - D)
        z = expm(A_m * (b - a)) @ z + conv
    return z


def u_exact(x, history: InputHistory, signal: switching.SwitchingSignal,
            t: float, spec: SwitchedPlantSpec, K_list) -> float:
    """Gain of the mode active at ``t + D`` applied to the exact predictor."""
    K_arr = np.asarray(K_list, dtype=float).reshape(spec.p, spec.q)
    P = exact_predictor(x, history, signal, t, spec)
    g = switching.mode_at(signal, t + spec.D)
    return float(K_arr[g - 1] @ P)


def residual_w(u_applied: float, x, history: InputHistory,
               signal: switching.SwitchingSignal, t: float,
               spec: SwitchedPlantSpec, K_list) -> float:
    """Backstepping residual ``w(t)``: applied input minus exact predictor feedback."""
    return float(u_applied) - u_exact(x, history, signal, t, spec, K_list)


def evaluate(controller: ControllerSpec, x, history: InputHistory,
             signal: switching.SwitchingSignal, t: float,
             spec: SwitchedPlantSpec) -> float:
    """One controller evaluation at time ``t`` (reference path, no kernel)."""
    if isinstance(controller, OpenLoop):
        return 0.0
    if isinstance(controller, ExactOracle):
        return u_exact(x, history, signal, t, spec, controller.K_list)
    D_c = _controller_delay(spec, controller.delay)
    if controller.dwell_known:
        if controller.tau_d is None:
            raise ValueError("dwell-aware controller needs tau_d")
        tau_t = switching.tau(signal, t, controller.tau_d, D_c, True)
        # keep the prediction leg grid aligned
        tau_t = np.floor(tau_t / history.grid_dt + 1e-9) * history.grid_dt
    else:
        tau_t = 0.0
    mode_now = switching.mode_at(signal, t)
    if isinstance(controller, AveragePredictor):
        return u1(x, history, mode_now, tau_t, spec,
                  controller.A_bar, controller.B_bar, controller.K_bar, controller.delay)
    return u2(x, history, mode_now, tau_t, spec, controller.K_list, controller.delay)
