"""Scenario engine: closed-loop runs, cost index, ablations and sweeps.

Also holds the bundled three-mode benchmark (three unstable 2x2 modes
under a one-second input delay) together with its reference values, which
``reproduce_paper`` re-derives and checks end to end.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import control, margins, plant, switching
from .design import DesignResult, synthesize
from .numerics import NormKind
from .switching import DwellSpec, SwitchingSignal

__all__ = [
    "Scenario",
    "RunSummary",
    "ConfigError",
    "run",
    "ablate_dwell",
    "mismatch_sweep",
    "reproduce_paper",
    "ReproductionReport",
    "three_mode_plant",
    "three_mode_dwell",
    "three_mode_design",
    "load_config",
    "scenario_from_config",
    "design_from_config",
    "norm_equivalence_ratios",
    "residual_bound_ratios",
    "STABILITY_FACTOR",
]

STABILITY_FACTOR = 1e-3  # stable iff |X(T)| <= factor * |x0|


# ---------------------------------------------------------------------------
# bundled three-mode benchmark and its reference values

THREE_MODE_POLES = (-2.0, -3.0)

REFERENCE = {
    "K": np.array([[-13.0, -8.0],
                   [-10.7742, -7.6762],
                   [-10.5564, -7.4636]]),
    # only S[0] is checked: the quoted second and third certificates do not
    # satisfy their own stated equations (see the repo's decision notes)
    "S": np.array([[[3.1, 0.3], [0.3, 0.1333]],
                   [[9.168, 1.0113], [1.0113, 0.4255]],
                   [[6.0907, 0.6302], [0.6302, 0.2742]]]),
    "A_bar": np.array([[1.0280, 1.1077], [1.0837, 2.0562]]),
    "B_bar": np.array([0.0, 1.05]),
    "K_bar": np.array([-11.7782, -7.7318]),
    "eps": 1.2509,
    "eps_bar": 2.5018,
    "eps_star": 1.9687e-11,
    "tau_d_star": 21.002,
    "cost": {"u1": 3.68e2, "u1_nodwell": 8.34e2,
             "u2": 3.83e2, "u2_nodwell": 7.81e2, "exact": 2.32e2},
}


def three_mode_plant() -> plant.SwitchedPlantSpec:
    """Three unstable 2x2 modes, scalar input, delay D = 1."""
    A = [[[1.0, 1.0], [1.0, 2.0]],
         [[0.97, 1.15], [1.06, 2.09]],
         [[1.08, 1.2], [1.14, 2.13]]]
    B = [[0.0, 1.0], [0.0, 1.05], [0.0, 1.1]]
    return plant.SwitchedPlantSpec(A_list=np.array(A), B_list=np.array(B), D=1.0)


def three_mode_dwell() -> DwellSpec:
    return DwellSpec(tau_d=0.9, tau_bar_d=3.0)


def three_mode_q_list() -> list[np.ndarray]:
    return [np.eye(2), 3.0 * np.eye(2), 2.0 * np.eye(2)]


_DESIGN_CACHE: list = []


def three_mode_design() -> DesignResult:
    if not _DESIGN_CACHE:
        _DESIGN_CACHE.append(
            synthesize(three_mode_plant(), THREE_MODE_POLES, three_mode_q_list()))
    return _DESIGN_CACHE[0]


# ---------------------------------------------------------------------------
# scenario

@dataclass
class Scenario:
    """One closed-loop experiment, fully determined by its fields and seed."""

    plant: plant.SwitchedPlantSpec
    dwell: DwellSpec
    controller: control.ControllerSpec
    x0: np.ndarray
    T: float
    grid_dt: float = 1e-3
    u0: object = None
    seed: int | None = 0
    signal: SwitchingSignal | None = None  # replay; overrides seed
    controller_delay: float | None = None  # != plant.D in mismatch studies
    record_residuals: bool = False
    design: DesignResult | None = None     # gains for residual diagnostics
    label: str = "run"

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.signal is None and self.seed is None:
            raise ValueError("scenario needs a seed or a replay signal")

    def resolve_signal(self) -> SwitchingSignal:
        """Replay signal if given, else a seeded dwell-compliant realization."""
        if self.signal is not None:
            bad = switching.validate(self.signal, self.dwell)
            if bad:
                raise ValueError("replay signal violates the dwell bounds: "
                                 + "; ".join(str(v) for v in bad))
            return self.signal
        horizon = self.T + self.plant.D + self.dwell.tau_bar_d
        return switching.generate(self.dwell, self.plant.p, horizon,
                                  self.grid_dt, self.seed)


@dataclass
class RunSummary:
    J: float
    terminal_state_norm: float
    stable: bool
    max_residual_bound_ratio: float
    trajectory_path: str | None
    label: str = "run"
    delay_used: float | None = None

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


def _controller_with(controller, **overrides):
    valid = {f.name for f in dataclasses.fields(controller) if f.init}
    return dataclasses.replace(controller,
                               **{k: v for k, v in overrides.items() if k in valid})


def _run_batch(fn, tasks):
    """Independent scenario runs in parallel; results in task order.

    Runs share only immutable specs (the kernels release the GIL), so a
    thread pool is safe; aggregation stays order-independent because the
    caller keys results by task.
    """
    workers = min(8, os.cpu_count() or 1, max(1, len(tasks)))
    if workers == 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def cost_index(traj: plant.Trajectory) -> float:
    """Tracking-plus-effort cost: trapezoid of ``|X|^2 + U^2`` on the grid."""
    integrand = np.sum(traj.states**2, axis=1) + traj.inputs**2
    return float(np.trapezoid(integrand, dx=traj.grid_dt))


def residual_bound_ratios(traj: plant.Trajectory, design: DesignResult,
                          consts: margins.MarginConstants,
                          controller_kind: str) -> np.ndarray:
    """Pointwise ``|w(t)| / bound(t)`` for the recorded residuals.

    The bound is the mismatch gain at the controller's horizon times
    ``|X(t)| + int_{t-D}^t |U|``; for the averaging law the pairwise gain
    applies.
    """
    if traj.residuals is None:
        raise ValueError("run was not recorded with residuals")
    n_hist = int(round(consts.D / traj.grid_dt))
    if controller_kind == "average_predictor":
        gain = lambda tv: margins.mismatch_bound(design.eps, tv, consts)
    elif controller_kind == "averaging_predictors":
        gain = lambda tv: margins.mismatch_bound_hat(design.eps_bar, tv, consts)
    else:
        raise ValueError("residual bound applies to the two average laws only")

    u_full = np.concatenate([traj.inputs_pre[-n_hist:], traj.inputs])
    cum_abs = np.concatenate([[0.0], np.cumsum(np.abs(u_full))]) * traj.grid_dt
    n = traj.times.shape[0]
    int_u = cum_abs[n_hist:n_hist + n] - cum_abs[:n]
    state_norm = traj.state_norms()

    ratios = np.zeros(n)
    for k in range(n):
        bound = gain(float(traj.taus[k])) * (state_norm[k] + int_u[k])
        w = abs(float(traj.residuals[k]))
        if bound > 0.0:
            ratios[k] = w / bound
        else:
            ratios[k] = 0.0 if w <= 1e-12 else np.inf
    return ratios


def exact_predictor_profile(traj: plant.Trajectory, signal: SwitchingSignal,
                            spec: plant.SwitchedPlantSpec) -> np.ndarray:
    """The exact predictor at every grid instant of a stored run.

    Returns ``P`` with ``P[s]`` the delay-ahead state predicted from
    ``X(s dt)`` and the recorded inputs, using the true future modes; by
    construction it should reproduce ``states[s + n_hist]`` wherever the
    trajectory extends that far.
    """
    from ._backend.kernels_numpy import _PowerTables, _segments

    dt = traj.grid_dt
    n_hist = int(round(spec.D / dt))
    n = traj.times.shape[0] - 1
    sw = signal.switch_steps(dt)
    idx = np.arange(n + n_hist + 1)
    mode_steps = signal.modes[np.searchsorted(sw, idx, side="right") - 1] - 1

    u_all = np.concatenate([traj.inputs_pre[-n_hist:], traj.inputs])
    Ad, Bd = spec.discretize(dt)
    tables = _PowerTables(np.ascontiguousarray(Ad), np.ascontiguousarray(Bd), n_hist)
    P = np.empty_like(traj.states)
    for s in range(n + 1):
        z = traj.states[s]
        for a, b, m in _segments(mode_steps, s, s + n_hist):
            z = tables.roll(m, z, u_all[a:b])
        P[s] = z
    return P


def norm_equivalence_ratios(traj: plant.Trajectory, design: DesignResult,
                            consts: margins.MarginConstants) -> tuple[float, float]:
    """Empirical check of the two norm-equivalence inequalities.

    Returns ``(max over t of lhs1/rhs1, max of lhs2/rhs2)`` where
    ``lhs1 = |X|^2 + int U^2 <= nu1 (|X|^2 + int W^2) = rhs1`` and the
    second pair swaps U and W with ``nu2``.  Window integrals use the grid
    samples; the residual before time zero is reconstructed from the
    initial history and the stored states.
    """
    if traj.residuals is None:
        raise ValueError("run was not recorded with residuals")
    nu1, nu2 = margins.nu_constants(consts)
    n_hist = int(round(consts.D / traj.grid_dt))
    n = traj.times.shape[0]

    u_pre = traj.inputs_pre[-n_hist:]
    # w before t=0: initial input minus exact predictor feedback, where the
    # predictor equals the stored state D later
    w_pre = np.array([u_pre[j] - float(design.K_list[traj.modes[j] - 1] @ traj.states[j])
                      for j in range(n_hist)])
    u_full = np.concatenate([u_pre, traj.inputs])
    w_full = np.concatenate([w_pre, traj.residuals])
    cum_u2 = np.concatenate([[0.0], np.cumsum(u_full**2)]) * traj.grid_dt
    cum_w2 = np.concatenate([[0.0], np.cumsum(w_full**2)]) * traj.grid_dt
    int_u2 = cum_u2[n_hist:n_hist + n] - cum_u2[:n]
    int_w2 = cum_w2[n_hist:n_hist + n] - cum_w2[:n]
    x2 = traj.state_norms()**2

    r1 = np.max((x2 + int_u2) / (nu1 * (x2 + int_w2)))
    r2 = np.max((x2 + int_w2) / (nu2 * (x2 + int_u2)))
    return float(r1), float(r2)


def _snap_delay(delay: float, grid_dt: float) -> tuple[float, float]:
    n = max(int(round(delay / grid_dt)), 1)
    snapped = n * grid_dt
    return snapped, snapped - delay


def run(scenario: Scenario, out_dir: str | Path | None = None,
        signal: SwitchingSignal | None = None) -> RunSummary:
    """Simulate one scenario; write the trajectory CSV when a directory is given."""
    sig = signal if signal is not None else scenario.resolve_signal()
    controller = scenario.controller
    delay_used = scenario.plant.D
    if scenario.controller_delay is not None:
        snapped, _ = _snap_delay(scenario.controller_delay, scenario.grid_dt)
        controller = _controller_with(controller, delay=snapped)
        delay_used = snapped

    gains = scenario.design.K_list if scenario.design is not None else None
    traj = plant.simulate(scenario.plant, sig, controller, scenario.x0,
                          u0=scenario.u0, T=scenario.T, grid_dt=scenario.grid_dt,
                          record_residuals=scenario.record_residuals,
                          residual_gains=gains)

    J = cost_index(traj)
    terminal = float(np.linalg.norm(traj.states[-1]))
    stable = terminal <= STABILITY_FACTOR * float(np.linalg.norm(scenario.x0))

    ratio = math.nan
    if scenario.record_residuals and scenario.design is not None \
            and controller.kind in ("average_predictor", "averaging_predictors"):
        consts = margins.MarginConstants.from_design(scenario.design, scenario.plant.D)
        ratio = float(np.max(residual_bound_ratios(
            traj, scenario.design, consts, controller.kind)))

    path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = str(out_dir / f"{scenario.label}.csv")
        traj.to_csv(path)

    return RunSummary(J=J, terminal_state_norm=terminal, stable=stable,
                      max_residual_bound_ratio=ratio, trajectory_path=path,
                      label=scenario.label, delay_used=delay_used)


def run_trajectory(scenario: Scenario,
                   signal: SwitchingSignal | None = None) -> plant.Trajectory:
    """The raw trajectory for a scenario (diagnostics and tests)."""
    sig = signal if signal is not None else scenario.resolve_signal()
    controller = scenario.controller
    if scenario.controller_delay is not None:
        snapped, _ = _snap_delay(scenario.controller_delay, scenario.grid_dt)
        controller = _controller_with(controller, delay=snapped)
    gains = scenario.design.K_list if scenario.design is not None else None
    return plant.simulate(scenario.plant, sig, controller, scenario.x0,
                          u0=scenario.u0, T=scenario.T, grid_dt=scenario.grid_dt,
                          record_residuals=scenario.record_residuals,
                          residual_gains=gains)


def ablate_dwell(scenario: Scenario,
                 out_dir: str | Path | None = None) -> tuple[RunSummary, RunSummary]:
    """Same realization with and without dwell-time knowledge."""
    if scenario.controller.kind not in ("average_predictor", "averaging_predictors"):
        raise ValueError("dwell ablation applies to the two average laws only")
    sig = scenario.resolve_signal()
    with_sc = dataclasses.replace(
        scenario, controller=_controller_with(scenario.controller, dwell_known=True),
        label=f"{scenario.label}_dwell")
    without_sc = dataclasses.replace(
        scenario, controller=_controller_with(scenario.controller, dwell_known=False),
        label=f"{scenario.label}_nodwell")
    return run(with_sc, out_dir, signal=sig), run(without_sc, out_dir, signal=sig)


def mismatch_sweep(scenario: Scenario, perturbations,
                   out_dir: str | Path | None = None) -> list[dict]:
    """Controller believes ``D (1 + delta)`` while the plant keeps ``D``.

    Perturbed delays are snapped to the grid; the snap error is recorded
    with each row.
    """
    if scenario.controller.kind not in ("average_predictor", "averaging_predictors"):
        raise ValueError("delay mismatch applies to the two average laws only")
    sig = scenario.resolve_signal()

    def one(delta):
        requested = scenario.plant.D * (1.0 + float(delta))
        snapped, err = _snap_delay(requested, scenario.grid_dt)
        sc = dataclasses.replace(scenario, controller_delay=requested,
                                 label=f"{scenario.label}_delta{delta:+.4f}")
        summary = run(sc, out_dir, signal=sig)
        return {"delta": float(delta), "delay_requested": requested,
                "delay_used": snapped, "snap_error": err, "summary": summary}

    return _run_batch(one, list(perturbations))


# ---------------------------------------------------------------------------
# end-to-end reproduction of the bundled benchmark

@dataclass
class GoldenCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class ReproductionReport:
    golden: list[GoldenCheck]
    costs: dict
    stability: dict
    orderings: dict
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = all(g.passed for g in self.golden)

    def text(self) -> str:
        lines = ["benchmark reproduction", "", "golden checks:"]
        for g in self.golden:
            lines.append(f"  [{'PASS' if g.passed else 'FAIL'}] {g.name}: {g.detail}")
        lines.append("")
        lines.append("cost J per controller and seed:")
        labels = list(self.costs)
        seeds = sorted(next(iter(self.costs.values())))
        header = "  seed " + " ".join(f"{lab:>12s}" for lab in labels)
        lines.append(header)
        for s in seeds:
            lines.append(f"  {s:4d} " + " ".join(f"{self.costs[lab][s]:12.4g}"
                                                 for lab in labels))
        lines.append("")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _relative_gap(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def reproduce_paper(seeds: int = 5, out_dir: str | Path | None = None,
                    grid_dt: float = 1e-3, T: float = 20.0) -> ReproductionReport:
    """Re-run the bundled benchmark end to end against its reference values.

    Synthesis golden checks first (gains, certificates, centers, margin
    quantities), then the five feedback laws on ``seeds`` seeded
    realizations, including the cost-ordering checks.  Failures are
    reported, never raised.
    """
    spec = three_mode_plant()
    dwell = three_mode_dwell()
    design = three_mode_design()
    golden: list[GoldenCheck] = []

    def check(name, ok, detail):
        golden.append(GoldenCheck(name=name, passed=bool(ok), detail=detail))

    gap = _relative_gap(design.K_list[0], REFERENCE["K"][0])
    check("gain K1 exact", gap <= 1e-9, f"max entry gap {gap:.2e} (tol 1e-9)")
    for i in (1, 2):
        gap = _relative_gap(design.K_list[i], REFERENCE["K"][i])
        check(f"gain K{i + 1}", gap <= 1e-3, f"max entry gap {gap:.2e} (tol 1e-3)")
    # only S1 is pinned: the other two reference certificates do not satisfy
    # their own stated equations (see decisions ledger)
    gap = _relative_gap(design.S_list[0], REFERENCE["S"][0])
    res = float(np.linalg.norm(
        (design.A_list[0] + np.outer(design.B_list[0], design.K_list[0])).T
        @ design.S_list[0]
        + design.S_list[0]
        @ (design.A_list[0] + np.outer(design.B_list[0], design.K_list[0]))
        + design.Q_list[0], 2))
    check("certificate S1", gap <= 1e-3 and res <= 1e-9,
          f"max entry gap {gap:.2e} (tol 1e-3), residual {res:.2e} (tol 1e-9)")

    gap = _relative_gap(design.K_bar, REFERENCE["K_bar"])
    check("center K_bar", gap <= 1e-3, f"max entry gap {gap:.2e} (tol 1e-3)")
    gap = _relative_gap(design.B_bar, REFERENCE["B_bar"])
    check("center B_bar", gap <= 1e-6, f"max entry gap {gap:.2e} (tol 1e-6)")

    # flat optimum caveat: the A-center is pinned through its radius first,
    # entries only loosely
    ref_radius = max(float(np.linalg.norm(REFERENCE["A_bar"] - A, 2))
                     for A in spec.A_list)
    gap = abs(design.radius_A - ref_radius)
    check("center A_bar radius", gap <= 1e-3,
          f"radius gap {gap:.2e} vs reference center (tol 1e-3)")
    gap = _relative_gap(design.A_bar, REFERENCE["A_bar"])
    check("center A_bar entries", gap <= 1e-2, f"max entry gap {gap:.2e} (tol 1e-2)")

    check("mismatch radius eps", abs(design.eps - REFERENCE["eps"]) <= 1e-3,
          f"eps = {design.eps:.6g} (ref {REFERENCE['eps']})")
    check("pairwise radius eps_bar", abs(design.eps_bar - REFERENCE["eps_bar"]) <= 1e-3,
          f"eps_bar = {design.eps_bar:.6g} (ref {REFERENCE['eps_bar']})")

    consts = margins.MarginConstants.from_design(design, spec.D)
    report0 = margins.rate_pipeline(design, consts, 0.0, dwell.tau_d, dwell.tau_bar_d)
    ref = REFERENCE["eps_star"]
    ok = ref / 2 <= report0.eps_star <= ref * 2
    check("margin eps_star", ok,
          f"eps_star = {report0.eps_star:.4e} (ref {ref:.4e}, factor-2 band)")
    ref = REFERENCE["tau_d_star"]
    ok = report0.feasible and ref / 2 <= report0.tau_d_star <= ref * 2
    check("margin tau_d_star at zero mismatch", ok,
          f"tau_d_star = {report0.tau_d_star:.6g} (ref {ref}, factor-2 band)")
    report_actual = margins.rate_pipeline(design, consts, design.eps,
                                          dwell.tau_d, dwell.tau_bar_d,
                                          eps_bar_used=design.eps_bar)
    check("pipeline infeasible at actual mismatch",
          not report_actual.feasible and not report_actual.feasible_bar,
          f"beta = {report_actual.beta:.3g}, beta_bar = {report_actual.beta_bar:.3g}")

    # five feedback laws on shared realizations
    td = dwell.tau_d
    laws = {
        "exact": control.ExactOracle(K_list=design.K_list),
        "u1": control.AveragePredictor(design.A_bar, design.B_bar, design.K_bar,
                                       dwell_known=True, tau_d=td),
        "u1_nodwell": control.AveragePredictor(design.A_bar, design.B_bar,
                                               design.K_bar, dwell_known=False),
        "u2": control.AveragingPredictors(design.K_list, dwell_known=True, tau_d=td),
        "u2_nodwell": control.AveragingPredictors(design.K_list, dwell_known=False),
    }
    x0 = np.array([1.0, -1.0])
    costs = {lab: {} for lab in laws}
    stability = {lab: {} for lab in laws}
    seed_list = list(range(1, seeds + 1))
    horizon = T + spec.D + dwell.tau_bar_d
    signals = {seed: switching.generate(dwell, spec.p, horizon, grid_dt, seed)
               for seed in seed_list}

    def one(task):
        lab, seed = task
        sc = Scenario(plant=spec, dwell=dwell, controller=laws[lab], x0=x0, T=T,
                      grid_dt=grid_dt, seed=seed, signal=signals[seed],
                      design=design, label=f"{lab}_seed{seed}")
        return run(sc, out_dir)

    tasks = [(lab, seed) for seed in seed_list for lab in laws]
    for (lab, seed), summary in zip(tasks, _run_batch(one, tasks)):
        costs[lab][seed] = summary.J
        stability[lab][seed] = summary.stable

    orderings = {"exact_best": {}, "u1_dwell_helps": {}, "u2_dwell_helps": {},
                 "avg_below_nodwell": {}}
    for seed in seed_list:
        orderings["exact_best"][seed] = costs["exact"][seed] < min(
            costs["u1"][seed], costs["u2"][seed])
        orderings["u1_dwell_helps"][seed] = costs["u1_nodwell"][seed] > costs["u1"][seed]
        orderings["u2_dwell_helps"][seed] = costs["u2_nodwell"][seed] > costs["u2"][seed]
        orderings["avg_below_nodwell"][seed] = min(
            costs["u1"][seed], costs["u2"][seed]) < max(
            costs["u1_nodwell"][seed], costs["u2_nodwell"][seed])

    need = max(1, seeds - 1)
    for name, per_seed in orderings.items():
        hits = sum(per_seed.values())
        check(f"cost ordering {name}", hits >= need,
              f"{hits}/{seeds} seeds (need >= {need})")

    all_stable = all(stability[lab][s] for lab in ("u1", "u2", "exact")
                     for s in seed_list)
    check("closed-loop stabilization", all_stable,
          f"terminal norm below {STABILITY_FACTOR:g} * |x0| for u1/u2/exact on all seeds")

    mags_ok, worst = True, 1.0
    for lab, ref_cost in REFERENCE["cost"].items():
        for s in seed_list:
            f = costs[lab][s] / ref_cost
            worst = max(worst, f, 1.0 / f)
            if not (1.0 / 3.0 <= f <= 3.0):
                mags_ok = False
    check("cost magnitudes (factor-3 band)", mags_ok,
          f"worst factor {worst:.3g} vs reference table")

    report = ReproductionReport(golden=golden, costs=costs,
                                stability=stability, orderings=orderings)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "reproduction.txt").write_text(report.text() + "\n")
        payload = {
            "passed": report.passed,
            "golden": [dataclasses.asdict(g) for g in report.golden],
            "costs": costs, "stability": stability,
        }
        (out_dir / "reproduction.json").write_text(json.dumps(payload, indent=2))
    return report


# ---------------------------------------------------------------------------
# configuration files

class ConfigError(ValueError):
    """Bad or missing configuration content."""


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def _need(cfg: dict, section: str) -> dict:
    if section not in cfg:
        raise ConfigError(f"missing config section: {section}")
    if not isinstance(cfg[section], dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    return cfg[section]


def _plant_from_config(cfg: dict) -> plant.SwitchedPlantSpec:
    sec = _need(cfg, "plant")
    try:
        return plant.SwitchedPlantSpec(A_list=np.asarray(sec["A"], dtype=float),
                                       B_list=np.asarray(sec["B"], dtype=float),
                                       D=float(sec["delay"]))
    except KeyError as exc:
        raise ConfigError(f"plant section needs key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad plant section: {exc}") from exc


def _dwell_from_config(cfg: dict) -> DwellSpec:
    sec = _need(cfg, "dwell")
    try:
        return DwellSpec(tau_d=float(sec["min"]), tau_bar_d=float(sec["max"]))
    except KeyError as exc:
        raise ConfigError(f"dwell section needs key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad dwell section: {exc}") from exc


def _q_matrices(raw, p: int, q: int) -> list[np.ndarray]:
    if raw is None:
        return [np.eye(q) for _ in range(p)]
    if len(raw) != p:
        raise ConfigError(f"design.Q must list {p} entries")
    out = []
    for entry in raw:
        arr = np.asarray(entry, dtype=float)
        out.append(arr * np.eye(q) if arr.ndim == 0 else arr)
    return out


def design_from_config(cfg: dict):
    """(plant, poles, Q_list, norm_kind) from the plant/design sections."""
    spec = _plant_from_config(cfg)
    sec = _need(cfg, "design")
    try:
        poles = [complex(v) if isinstance(v, str) else float(v) for v in sec["poles"]]
    except KeyError as exc:
        raise ConfigError(f"design section needs key {exc}") from exc
    q_list = _q_matrices(sec.get("Q"), spec.p, spec.q)
    norm = NormKind.coerce(sec.get("norm", "spectral"))
    return spec, poles, q_list, norm


def resolve_design(cfg: dict, spec: plant.SwitchedPlantSpec,
                   base_dir: Path | None = None) -> DesignResult | None:
    """Design from the config: load a serialized one, or synthesize fresh."""
    if "design" not in cfg:
        return None
    sec = _need(cfg, "design")
    if "file" in sec:
        path = Path(sec["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"design file not found: {path}")
        design = DesignResult.from_json(path)
        if design.p != spec.p or design.q != spec.q:
            raise ConfigError("design file dimensions do not match the plant")
        return design
    _, poles, q_list, norm = design_from_config(cfg)
    return synthesize(spec, poles, q_list, norm)


_CONTROLLER_TYPES = ("average_predictor", "averaging_predictors",
                     "exact_oracle", "open_loop")


def _controller_from_config(cfg: dict, design: DesignResult | None,
                            dwell: DwellSpec) -> control.ControllerSpec:
    sec = _need(cfg, "controller")
    ctype = sec.get("type")
    if ctype not in _CONTROLLER_TYPES:
        raise ConfigError(f"controller.type must be one of {_CONTROLLER_TYPES}")
    if ctype == "open_loop":
        return control.OpenLoop()

    def from_design(attr, key):
        if key in sec:
            return np.asarray(sec[key], dtype=float)
        if design is None:
            raise ConfigError(f"controller needs {key} or a design section")
        return getattr(design, attr)

    dwell_known = bool(sec.get("dwell_known", True))
    tau_d = float(sec.get("tau_d", dwell.tau_d))
    if ctype == "average_predictor":
        return control.AveragePredictor(
            A_bar=from_design("A_bar", "A_bar"), B_bar=from_design("B_bar", "B_bar"),
            K_bar=from_design("K_bar", "K_bar"), dwell_known=dwell_known, tau_d=tau_d)
    if ctype == "averaging_predictors":
        return control.AveragingPredictors(
            K_list=from_design("K_list", "K_list"), dwell_known=dwell_known, tau_d=tau_d)
    return control.ExactOracle(K_list=from_design("K_list", "K_list"))


def scenario_from_config(cfg: dict, base_dir: Path | None = None) -> Scenario:
    """Build the scenario (and its design, when configured) from a config dict."""
    spec = _plant_from_config(cfg)
    dwell = _dwell_from_config(cfg)
    design = resolve_design(cfg, spec, base_dir)

    sec = _need(cfg, "sim")
    try:
        x0 = np.asarray(sec["x0"], dtype=float)
        T = float(sec["T"])
    except KeyError as exc:
        raise ConfigError(f"sim section needs key {exc}") from exc
    grid_dt = float(sec.get("grid_dt", 1e-3))
    u0 = sec.get("u0", "zero")
    if u0 not in ("zero", None) and not isinstance(u0, (list, tuple)):
        raise ConfigError("sim.u0 must be 'zero' or a list of samples")

    signal = None
    seed = sec.get("seed", 0)
    if "signal_file" in sec:
        sig_path = Path(sec["signal_file"])
        if base_dir is not None and not sig_path.is_absolute():
            sig_path = base_dir / sig_path
        if not sig_path.exists():
            raise ConfigError(f"signal file not found: {sig_path}")
        signal = switching.signal_from_table(sig_path.read_text())
        seed = None

    controller = _controller_from_config(cfg, design, dwell)
    scenario = Scenario(
        plant=spec, dwell=dwell, controller=controller, x0=x0, T=T,
        grid_dt=grid_dt, seed=seed, signal=signal,
        controller_delay=sec.get("controller_delay"),
        record_residuals=bool(sec.get("record_residuals", False)),
        design=design, label=str(sec.get("label", "run")))
    scenario.u0 = None if u0 in ("zero", None) else np.asarray(u0, dtype=float)
    try:
        _validate_alignment(scenario)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return scenario


def _validate_alignment(sc: Scenario) -> None:
    for name, value in (("T", sc.T), ("plant delay", sc.plant.D)):
        k = value / sc.grid_dt
        if abs(k - round(k)) > 1e-6:
            raise ValueError(f"{name} = {value} is not a multiple of grid_dt")
