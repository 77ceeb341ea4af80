"""Switched linear plant with delayed scalar input, on a fixed grid.

The plant ``xdot = A_sigma(t) x + B_sigma(t) u(t - D)`` is advanced with
exact zero-order-hold steps: the controller output is held constant over
each grid cell, so per-step propagation with the discretized pair
``(Ad, Bd)`` is exact, and every predictor integral reduces to a finite
sum over history cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import switching
from ._backend import simulate_loop
from .numerics import zoh_discretize

__all__ = [
    "SwitchedPlantSpec",
    "InputHistory",
    "Trajectory",
    "step",
    "history_integral",
    "simulate",
]

_KIND_CODES = {"open_loop": 0, "average_predictor": 1,
               "averaging_predictors": 2, "exact_oracle": 3}


@dataclass(eq=False)
class SwitchedPlantSpec:
    """Mode family ``{(A_i, B_i)}`` plus the constant input delay ``D``."""

    A_list: np.ndarray  # (p, q, q)
    B_list: np.ndarray  # (p, q)
    D: float
    _disc_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        A = np.asarray(self.A_list, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"A_list must be (p, q, q), got {A.shape}")
        B = np.asarray(self.B_list, dtype=float)
        if B.ndim == 3 and B.shape[2] == 1:
            B = B[:, :, 0]
        if B.ndim != 2 or B.shape != A.shape[:2]:
            raise ValueError(f"B_list must be (p, q), got {np.shape(self.B_list)}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("plant matrices must be finite")
        if self.D <= 0:
            raise ValueError("delay D must be positive")
        self.A_list = A
        self.B_list = B

    @property
    def p(self) -> int:
        return self.A_list.shape[0]

    @property
    def q(self) -> int:
        return self.A_list.shape[1]

    def mode_matrices(self, mode: int) -> tuple[np.ndarray, np.ndarray]:
        """(A_i, B_i) for a 1-based mode index."""
        if not 1 <= mode <= self.p:
            raise ValueError(f"mode {mode} outside 1..{self.p}")
        return self.A_list[mode - 1], self.B_list[mode - 1]

    def discretize(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-mode ZOH pairs ``(Ad, Bd)`` at step ``dt``, cached."""
        key = round(float(dt), 15)
        pair = self._disc_cache.get(key)
        if pair is None:
            Ad = np.empty_like(self.A_list)
            Bd = np.empty_like(self.B_list)
            for i in range(self.p):
                Ad[i], Bd[i] = zoh_discretize(self.A_list[i], self.B_list[i], dt)
            Ad.setflags(write=False)
            Bd.setflags(write=False)
            pair = (Ad, Bd)
            self._disc_cache[key] = pair
        return pair


@dataclass
class InputHistory:
    """ZOH input samples covering ``[current_time - span, current_time)``.

    ``samples[j]`` holds the input on the cell starting at
    ``current_time - span + j * grid_dt``; the oldest sample comes first.
    """

    grid_dt: float
    samples: np.ndarray
    current_time: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("history samples must be 1-D")
        if self.grid_dt <= 0:
            raise ValueError("grid_dt must be positive")

    @property
    def span(self) -> float:
        return self.samples.shape[0] * self.grid_dt

    def _cell_index(self, theta: float, what: str) -> int:
        start = self.current_time - self.span
        k = (theta - start) / self.grid_dt
        ki = int(round(k))
        if abs(k - ki) > 1e-6:
            raise ValueError(f"{what} = {theta} is not grid aligned")
        if not 0 <= ki <= self.samples.shape[0]:
            raise ValueError(f"{what} = {theta} outside the history window")
        return ki


def history_integral(history: InputHistory, A, B, from_: float, to: float,
                     anchor: float) -> np.ndarray:
    """Exact ``int_from^to exp(A (anchor - theta)) B u(theta) dtheta``.

    Endpoints must be grid aligned and inside the history window, with
    ``from_ <= to <= anchor``.  The ZOH history makes the per-cell
    integrals exact: each cell contributes ``Ad^k Bd u`` for the one-step
    pair of ``(A, B)``.
    """
    k0 = history._cell_index(from_, "from")
    k1 = history._cell_index(to, "to")
    if k1 < k0:
        raise ValueError("need from <= to")
    ka = (anchor - to) / history.grid_dt
    kai = int(round(ka))
    if abs(ka - kai) > 1e-6 or kai < 0:
        raise ValueError("anchor must be grid aligned and >= to")

    A = np.asarray(A, dtype=float)
    q = A.shape[0]
    v = np.zeros(q)
    if k1 == k0:
        return v
    Ad, Bd = zoh_discretize(A, np.asarray(B, dtype=float).reshape(-1), history.grid_dt)
    for k in range(k0, k1):
        v = Ad @ v + Bd * history.samples[k]
    for _ in range(kai):
        v = Ad @ v
    return v


def step(spec: SwitchedPlantSpec, x, mode: int, u_delayed: float,
         grid_dt: float) -> np.ndarray:
    """One exact ZOH step of the plant in the given mode."""
    if grid_dt <= 0:
        raise ValueError("grid_dt must be positive")
    if not 1 <= mode <= spec.p:
        raise ValueError(f"mode {mode} outside 1..{spec.p}")
    Ad, Bd = spec.discretize(grid_dt)
    x = np.asarray(x, dtype=float).reshape(-1)
    return Ad[mode - 1] @ x + Bd[mode - 1] * float(u_delayed)


@dataclass
class Trajectory:
    """Grid-sampled closed-loop run.

    All per-instant arrays share the same length; ``inputs_pre`` holds the
    initial input history on ``[-n_pre * grid_dt, 0)`` (oldest first),
    whose trailing ``round(D / grid_dt)`` cells cover ``[-D, 0)``.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    modes: np.ndarray
    taus: np.ndarray
    grid_dt: float
    inputs_pre: np.ndarray
    residuals: np.ndarray | None = None

    def __post_init__(self):
        n = self.times.shape[0]
        for name in ("states", "inputs", "modes", "taus"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} length differs from times")
        if self.residuals is not None and self.residuals.shape[0] != n:
            raise ValueError("residuals length differs from times")

    @property
    def q(self) -> int:
        return self.states.shape[1]

    def state_norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def to_csv(self, path) -> None:
        """Header ``t, x1..xq, u, mode, tau, w``; 17 significant digits."""
        q = self.q
        cols = ["t"] + [f"x{i + 1}" for i in range(q)] + ["u", "mode", "tau"]
        arrays = [self.times] + [self.states[:, i] for i in range(q)]
        arrays += [self.inputs, self.modes.astype(float), self.taus]
        if self.residuals is not None:
            cols.append("w")
            arrays.append(self.residuals)
        data = np.column_stack(arrays)
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _grid_steps(value: float, grid_dt: float, name: str) -> int:
    k = value / grid_dt
    ki = int(round(k))
    if ki <= 0 or abs(k - ki) > 1e-6:
        raise ValueError(f"{name} = {value} must be a positive multiple of grid_dt")
    return ki


def _sample_initial_history(u0, n_pre: int, grid_dt: float) -> np.ndarray:
    if u0 is None or (isinstance(u0, str) and u0 == "zero"):
        return np.zeros(n_pre)
    if callable(u0):
        theta = (np.arange(n_pre) - n_pre) * grid_dt
        return np.asarray([float(u0(t)) for t in theta])
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    if u0.shape[0] != n_pre:
        raise ValueError(f"initial history needs {n_pre} samples, got {u0.shape[0]}")
    return u0.copy()


def simulate(spec: SwitchedPlantSpec, signal: switching.SwitchingSignal,
             controller, x0, u0=None, T: float = 10.0, grid_dt: float = 1e-3,
             record_residuals: bool = False, residual_gains=None) -> Trajectory:
    """Closed-loop run of the delayed switched plant under one controller.

    The controller is re-evaluated at every grid instant and its output is
    held over the step; the plant sees the input emitted ``D`` earlier.
    ``record_residuals`` additionally logs the gap between the applied
    input and the exact predictor feedback at every instant, which needs
    the signal (and per-mode gains) out to ``T + D``.

    Deterministic: everything is fixed by the arguments.
    """
    kind = _KIND_CODES.get(getattr(controller, "kind", None))
    if kind is None:
        raise ValueError(f"unknown controller kind: {controller!r}")

    n_steps = _grid_steps(T, grid_dt, "T")
    n_hist = _grid_steps(spec.D, grid_dt, "D")
    delay_c = getattr(controller, "delay", None)
    n_ctrl = n_hist if delay_c is None else _grid_steps(delay_c, grid_dt, "controller delay")
    n_pre = max(n_hist, n_ctrl)

    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != spec.q or not np.all(np.isfinite(x0)):
        raise ValueError(f"x0 must be a finite vector of length {spec.q}")
    if signal.p != spec.p:
        raise ValueError("signal mode count differs from the plant")

    needs_future = record_residuals or kind == 3
    if needs_future and signal.causal:
        raise ValueError("oracle access to a causal signal: exact predictor and "
                         "residual diagnostics need the future switching signal")
    horizon_needed = (n_steps + n_hist) * grid_dt if needs_future else T
    if signal.horizon + 1e-9 < horizon_needed:
        raise ValueError(f"signal horizon {signal.horizon} too short, "
                         f"need at least {horizon_needed}")

    # per-instant mode indices (0-based) out to t = T + D; when the future
    # is not needed the tail entries are never read by the kernel
    sw = signal.switch_steps(grid_dt)
    idx = np.arange(n_steps + n_hist + 1)
    seg = np.searchsorted(sw, idx, side="right") - 1
    mode_steps = signal.modes[seg].astype(np.int64) - 1

    # controller's guaranteed-constant-mode horizon, in steps
    tau_steps = np.zeros(n_steps + 1, dtype=np.int64)
    if getattr(controller, "dwell_known", False) and kind in (1, 2):
        tau_d = getattr(controller, "tau_d", None)
        if tau_d is None or tau_d <= 0:
            raise ValueError("dwell-aware controller needs a positive tau_d")
        n_taud = int(np.floor(tau_d / grid_dt + 1e-9))
        last_sw = sw[np.searchsorted(sw, np.arange(n_steps + 1), side="right") - 1]
        tau_steps = np.clip(last_sw + n_taud - np.arange(n_steps + 1), 0,
                            min(n_taud, n_ctrl)).astype(np.int64)

    Ad, Bd = spec.discretize(grid_dt)
    q = spec.q
    if kind == 1:
        A_bar = np.asarray(controller.A_bar, dtype=float)
        B_bar = np.asarray(controller.B_bar, dtype=float).reshape(-1)
        if A_bar.shape != (q, q) or B_bar.shape != (q,):
            raise ValueError("average-system matrices do not match the plant dimension")
        Ad_bar, Bd_bar = zoh_discretize(A_bar, B_bar, grid_dt)
        K_bar = np.asarray(controller.K_bar, dtype=float).reshape(-1)
        if K_bar.shape != (q,):
            raise ValueError("K_bar must have length q")
    else:
        Ad_bar = np.eye(q)
        Bd_bar = np.zeros(q)
        K_bar = np.zeros(q)

    K_list = getattr(controller, "K_list", None)
    if K_list is None:
        K_list = residual_gains
    if K_list is None:
        if kind in (2, 3) or record_residuals:
            raise ValueError("per-mode gains K_list required (controller or residual_gains)")
        K_arr = np.zeros((spec.p, q))
    else:
        K_arr = np.asarray(K_list, dtype=float).reshape(spec.p, q)

    u_pre = _sample_initial_history(u0, n_pre, grid_dt)

    states, inputs, ws = simulate_loop(
        n_steps, n_hist, n_ctrl, n_pre,
        np.ascontiguousarray(Ad), np.ascontiguousarray(Bd),
        np.ascontiguousarray(Ad_bar), np.ascontiguousarray(Bd_bar),
        np.ascontiguousarray(K_bar), np.ascontiguousarray(K_arr),
        mode_steps, tau_steps, x0, u_pre, kind, bool(record_residuals))

    return Trajectory(
        times=np.arange(n_steps + 1) * grid_dt,
        states=states,
        inputs=inputs,
        modes=(mode_steps[:n_steps + 1] + 1).astype(int),
        taus=tau_steps * grid_dt,
        grid_dt=grid_dt,
        inputs_pre=u_pre,
        residuals=ws if record_residuals else None,
    )
