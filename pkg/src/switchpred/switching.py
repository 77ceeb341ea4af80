"""Switching signals, dwell-time validation/generation and the prediction horizon.

A signal is a right-continuous piecewise-constant map from time to a mode
index in ``{1..p}``: mode ``modes[k]`` is active on ``[switch_times[k],
switch_times[k+1])`` and the final mode runs out to ``horizon``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DwellSpec",
    "SwitchingSignal",
    "DwellViolation",
    "mode_at",
    "tau0",
    "tau",
    "generate",
    "validate",
    "signal_to_table",
    "signal_from_table",
]


@dataclass(frozen=True)
class DwellSpec:
    """Minimum / maximum time between consecutive switches."""

    tau_d: float
    tau_bar_d: float

    def __post_init__(self):
        if not (0.0 < self.tau_d <= self.tau_bar_d):
            raise ValueError(
                f"need 0 < tau_d <= tau_bar_d, got ({self.tau_d}, {self.tau_bar_d})")


@dataclass(eq=False)
class SwitchingSignal:
    """A realized switching signal on ``[0, horizon]``.

    ``causal=True`` marks a signal whose future is not to be consulted;
    oracle-only operations (exact predictor, residual diagnostics) refuse
    to run on causal signals.
    """

    switch_times: np.ndarray
    modes: np.ndarray
    p: int
    horizon: float
    causal: bool = False
    _steps_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.switch_times = np.asarray(self.switch_times, dtype=float)
        self.modes = np.asarray(self.modes, dtype=int)
        if self.switch_times.ndim != 1 or self.switch_times.shape != self.modes.shape:
            raise ValueError("switch_times and modes must be 1-D with equal length")
        if self.switch_times.size == 0:
            raise ValueError("signal needs at least the initial interval")
        if self.switch_times[0] != 0.0:
            raise ValueError("first switch time must be t0 = 0")
        if np.any(np.diff(self.switch_times) <= 0):
            raise ValueError("switch times must be strictly increasing")
        if np.any((self.modes < 1) | (self.modes > self.p)):
            raise ValueError(f"mode indices must lie in 1..{self.p}")
        if np.any(np.diff(self.modes) == 0):
            raise ValueError("consecutive modes must differ")
        if self.horizon < self.switch_times[-1]:
            raise ValueError("horizon must cover the last switch time")

    def switch_steps(self, grid_dt: float) -> np.ndarray:
        """Switch times as integer grid steps; errors if any time is off-grid."""
        key = round(grid_dt, 15)
        steps = self._steps_cache.get(key)
        if steps is None:
            steps = np.round(self.switch_times / grid_dt).astype(np.int64)
            if not np.allclose(steps * grid_dt, self.switch_times, atol=1e-9 * grid_dt + 1e-12):
                raise ValueError("switch times are not aligned with the grid")
            self._steps_cache[key] = steps
        return steps


def _check_time(signal: SwitchingSignal, t: float) -> float:
    if not (0.0 <= t <= signal.horizon + 1e-12):
        raise ValueError(f"t = {t} outside [0, {signal.horizon}]")
    return min(float(t), signal.horizon)


def mode_at(signal: SwitchingSignal, t: float) -> int:
    """Active mode at time ``t`` (right-continuous at switch instants)."""
    t = _check_time(signal, t)
    k = int(np.searchsorted(signal.switch_times, t, side="right")) - 1
    return int(signal.modes[k])


def tau0(signal: SwitchingSignal, t: float) -> float:
    """Most recent switch time <= t."""
    t = _check_time(signal, t)
    k = int(np.searchsorted(signal.switch_times, t, side="right")) - 1
    return float(signal.switch_times[k])


def tau(signal: SwitchingSignal, t: float, tau_d: float, D: float,
        dwell_known: bool = True) -> float:
    """Remaining horizon over which the current mode is guaranteed constant.

    Sawtooth ``max(0, min(tau0(t) + tau_d - t, D))`` when a minimum dwell
    time is known; identically 0 when it is not (unknown/arbitrary
    switching).  The clamp at ``D`` covers the short-delay regime, where a
    prediction horizon beyond the delay is never needed.
    """
    if D <= 0:
        raise ValueError("D must be positive")
    if tau_d <= 0:
        raise ValueError("tau_d must be positive")
    if not dwell_known:
        _check_time(signal, t)
        return 0.0
    return max(0.0, min(tau0(signal, t) + tau_d - t, D))


def generate(spec: DwellSpec, p: int, horizon: float, grid_dt: float,
             seed: int) -> SwitchingSignal:
    """Draw a dwell-compliant signal, grid-aligned and seed-deterministic.

    Dwell lengths are uniform on ``[tau_d, tau_bar_d]`` snapped down to
    grid multiples (never below ``tau_d``); the next mode is uniform over
    the ``p - 1`` other modes.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if grid_dt <= 0:
        raise ValueError("grid_dt must be positive")
    if spec.tau_d < grid_dt:
        raise ValueError("infeasible snap: tau_d < grid_dt")
    if spec.tau_d < 2 * grid_dt:
        raise ValueError("need tau_d >= 2 * grid_dt")

    rng = np.random.default_rng(seed)
    min_steps = int(np.ceil(spec.tau_d / grid_dt - 1e-9))

    steps = [0]
    modes = [int(rng.integers(1, p + 1))]
    t_step = 0
    horizon_steps = int(np.floor(horizon / grid_dt + 1e-9))
    while p > 1:
        dwell = rng.uniform(spec.tau_d, spec.tau_bar_d)
        n = max(int(np.floor(dwell / grid_dt + 1e-9)), min_steps)
        if t_step + n >= horizon_steps:
            break
        t_step += n
        steps.append(t_step)
        # uniform over the other p-1 modes
        offset = int(rng.integers(1, p))
        modes.append((modes[-1] - 1 + offset) % p + 1)

    return SwitchingSignal(
        switch_times=np.asarray(steps, dtype=float) * grid_dt,
        modes=np.asarray(modes, dtype=int),
        p=p,
        horizon=float(horizon),
    )


@dataclass(frozen=True)
class DwellViolation:
    index: int
    gap: float
    kind: str  # "min" or "max"

    def __str__(self):
        bound = "minimum" if self.kind == "min" else "maximum"
        return f"interval {self.index}: gap {self.gap:.6g} violates {bound} dwell"


def validate(signal: SwitchingSignal, spec: DwellSpec,
             tol: float = 1e-9) -> list[DwellViolation]:
    """Check every inter-switch gap against the dwell bounds."""
    out: list[DwellViolation] = []
    gaps = np.diff(signal.switch_times)
    for k, g in enumerate(gaps):
        if g < spec.tau_d - tol:
            out.append(DwellViolation(index=k, gap=float(g), kind="min"))
        elif g > spec.tau_bar_d + tol:
            out.append(DwellViolation(index=k, gap=float(g), kind="max"))
    return out


def signal_to_table(signal: SwitchingSignal) -> str:
    """Plain-text table, one row per interval: ``t_k mode``."""
    buf = io.StringIO()
    buf.write(f"# p={signal.p} horizon={float(signal.horizon)!r}\n")
    buf.write("# t_k mode\n")
    for t_k, m in zip(signal.switch_times, signal.modes):
        buf.write(f"{float(t_k)!r} {int(m)}\n")
    return buf.getvalue()


def signal_from_table(text: str, causal: bool = False) -> SwitchingSignal:
    """Parse the table emitted by :func:`signal_to_table`."""
    p = None
    horizon = None
    times: list[float] = []
    modes: list[int] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tokenlist in line[1:].split():
                if "=" in tokenlist:
                    k, v = tokenlist.split("=", 1)
                    if k == "p":
                        p = int(v)
                    elif k == "horizon":
                        horizon = float(v)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"malformed signal row: {line!r}")
        times.append(float(parts[0]))
        modes.append(int(parts[1]))
    if not times:
        raise ValueError("empty signal table")
    if p is None:
        p = max(modes)
    if horizon is None:
        horizon = times[-1]
    return SwitchingSignal(
        switch_times=np.asarray(times), modes=np.asarray(modes),
        p=p, horizon=horizon, causal=causal)
