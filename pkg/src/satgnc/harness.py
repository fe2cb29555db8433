"""Closed-loop simulation orchestration, metrics, and the Monte Carlo
robustness campaign.

A run wires together: sensor sampling of the true state, an estimator
(truth bypass or the neuro-fuzzy observer), quaternion error against the
commanded attitude, one of the three controllers, optional PWPF
modulation, and RK4 plant propagation with the true inertia.  Everything
is logged on a uniform time grid so all metrics derive from the record.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import pwpf as pwpf_mod
from .config import MonteCarloConfig, SimConfig, UNCERTAIN_INERTIA, dump_sim_config
from .dynamics import (AngularVelocity, BodyState, EulerAngles,
                       IntegrationDivergedError, Quaternion, Torque,
                       euler_to_quat, integrate_step, quat_to_euler,
                       quaternion_error)
from .pid import PidGains, PidState, accumulate_cost, pid_raw, pid_step
from .roles import (RoleBundle, anfis_control, anfis_estimate, anfis_integrated)
from .sensors import (NoiseSpec, SensorReading, TiltedDipoleField, gyro_reading,
                      julian_date, magnetometer_reading, sun_direction_inertial,
                      sun_sensor_reading)

__all__ = [
    "RunRecord",
    "Metrics",
    "MonteCarloReport",
    "MissingBundleError",
    "run_closed_loop",
    "fuel_consumption",
    "settling_time",
    "final_euler_error",
    "compute_metrics",
    "monte_carlo",
    "evaluate_controllers",
    "format_evaluation",
    "default_workers",
]

CSV_COLUMNS = ("t", "q1", "q2", "q3", "q4", "w1", "w2", "w3",
               "qe1", "qe2", "qe3", "mc1", "mc2", "mc3",
               "applied1", "applied2", "applied3",
               "phi", "theta", "psi",
               "est_q1", "est_q2", "est_q3", "est_q4",
               "est_w1", "est_w2", "est_w3")


class MissingBundleError(RuntimeError):
    """A run requested a neuro-fuzzy role whose bundle was not supplied."""


@dataclass
class RunRecord:
    """Sampled closed-loop trajectory plus its configuration echo."""
    t: np.ndarray
    q: np.ndarray
    w: np.ndarray
    qe: np.ndarray
    mc_cmd: np.ndarray
    applied: np.ndarray
    euler: np.ndarray
    est_q: np.ndarray
    est_w: np.ndarray
    config: SimConfig
    cost_j: float
    sensor: np.ndarray | None = None
    mc_raw: np.ndarray | None = None   # unsaturated commands, PID runs only

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for line in dump_sim_config(self.config).splitlines():
                fh.write(f"# {line}\n")
            wr = csv.writer(fh)
            wr.writerow(CSV_COLUMNS)
            for k in range(len(self.t)):
                row = ([self.t[k]] + list(self.q[k]) + list(self.w[k])
                       + list(self.qe[k]) + list(self.mc_cmd[k])
                       + list(self.applied[k]) + list(self.euler[k])
                       + list(self.est_q[k]) + list(self.est_w[k]))
                wr.writerow([repr(float(v)) for v in row])

    @staticmethod
    def from_csv(path) -> "RunRecord":
        from .config import parse_sim_config
        header_lines = []
        with open(path, newline="") as fh:
            rows = []
            for line in fh:
                if line.startswith("# "):
                    header_lines.append(line[2:])
                    continue
                rows.append(line)
        cfg = parse_sim_config("".join(header_lines))
        rd = csv.reader(rows)
        cols = next(rd)
        if tuple(cols) != CSV_COLUMNS:
            raise ValueError(f"unexpected run record columns in {path}")
        data = np.array([[float(v) for v in row] for row in rd])
        rec = RunRecord(
            t=data[:, 0], q=data[:, 1:5], w=data[:, 5:8], qe=data[:, 8:11],
            mc_cmd=data[:, 11:14], applied=data[:, 14:17], euler=data[:, 17:20],
            est_q=data[:, 20:24], est_w=data[:, 24:27], config=cfg, cost_j=0.0,
        )
        rec.cost_j = _cost_from_arrays(rec)
        return rec


def _cost_from_arrays(rec: "RunRecord") -> float:
    cost = 0.0
    dt = rec.config.dt
    n = len(rec.t) - 1
    for k in range(n):
        cost = accumulate_cost(cost, rec.qe[k], rec.w[k], dt)
    return cost


def _require_bundle(bundles: dict | None, role: str) -> RoleBundle:
    if not bundles or role not in bundles or bundles[role] is None:
        raise MissingBundleError(f"run requires a trained {role!r} bundle")
    bundle = bundles[role]
    if bundle.role != role:
        raise MissingBundleError(f"bundle has role {bundle.role!r}, expected {role!r}")
    return bundle


def run_closed_loop(config: SimConfig, gains: PidGains | None = None,
                    bundles: dict | None = None,
                    field_model=None, record_sensors: bool = False) -> RunRecord:
    """Simulate one closed loop and log every sample.

    The truth estimator bypasses the sensors entirely; the neuro-fuzzy
    estimator and the integrated controller consume noisy sensor readings.
    The plant always integrates with the true inertia.
    """
    n = config.n_steps
    dt = config.dt
    q_desired = euler_to_quat(config.desired_euler)

    need_sensors = (config.estimator == "anfis" or config.controller == "integrated"
                    or record_sensors)
    if config.controller == "pid" and gains is None:
        raise ValueError("PID run requires gains")
    ctrl_bundle = _require_bundle(bundles, "controller") if config.controller == "anfis" else None
    est_bundle = _require_bundle(bundles, "estimator") if config.estimator == "anfis" else None
    int_bundle = _require_bundle(bundles, "integrated") if config.controller == "integrated" else None

    if need_sensors:
        if field_model is None:
            field_model = TiltedDipoleField()
        b_inertial = field_model.field(config.geo, config.epoch)
        u_s_inertial = sun_direction_inertial(julian_date(config.epoch))
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed & 0x7FFFFFFF, config.noise.seed]))

    state = BodyState(euler_to_quat(config.initial_euler), config.initial_omega)
    pid_state = PidState()
    pwpf_state = pwpf_mod.reset(config.pwpf) if config.modulator == "pwpf" else None

    out_t = np.empty(n + 1)
    out_q = np.empty((n + 1, 4))
    out_w = np.empty((n + 1, 3))
    out_qe = np.empty((n + 1, 3))
    out_mc = np.empty((n + 1, 3))
    out_ap = np.empty((n + 1, 3))
    out_eu = np.empty((n + 1, 3))
    out_eq = np.empty((n + 1, 4))
    out_ew = np.empty((n + 1, 3))
    out_sense = np.empty((n + 1, 15)) if need_sensors else None
    out_raw = np.empty((n + 1, 3)) if config.controller == "pid" else None
    cost = 0.0

    dc, da, df = config.disturbance_const, config.disturbance_amp, config.disturbance_freq_hz

    for k in range(n + 1):
        t = k * dt
        q, w = state

        reading = None
        if need_sensors:
            u_b_body = magnetometer_reading(b_inertial, q, config.noise, rng)
            u_s_body = sun_sensor_reading(u_s_inertial, q, config.noise, rng)
            w_meas = gyro_reading(w, config.noise, rng)
            reading = SensorReading(u_b_body, u_s_body, w_meas,
                                    b_inertial / np.linalg.norm(b_inertial),
                                    u_s_inertial, t)
            out_sense[k, 0:3] = u_b_body
            out_sense[k, 3:6] = u_s_body
            out_sense[k, 6:9] = reading.u_b_inertial
            out_sense[k, 9:12] = u_s_inertial
            out_sense[k, 12:15] = w_meas

        if config.estimator == "anfis":
            q_hat, w_hat = anfis_estimate(est_bundle, reading)
        else:
            q_hat, w_hat = q, w

        qe = quaternion_error(q_hat, q_desired)
        qe_vec = (qe.q1, qe.q2, qe.q3)

        if config.controller == "pid":
            out_raw[k] = pid_raw(qe_vec, w_hat, pid_state, gains)
            mc = pid_step(qe_vec, w_hat, pid_state, gains, dt)
        elif config.controller == "anfis":
            mc = anfis_control(ctrl_bundle, qe_vec, w_hat)
        else:
            mc = anfis_integrated(int_bundle, reading)

        if pwpf_state is not None:
            pwpf_state, applied = pwpf_mod.pwpf_step(pwpf_state, mc, dt, config.pwpf)
        else:
            applied = mc

        eu = quat_to_euler(q)
        out_t[k] = t
        out_q[k] = q
        out_w[k] = w
        out_qe[k] = qe_vec
        out_mc[k] = mc
        out_ap[k] = applied
        out_eu[k] = eu
        out_eq[k] = q_hat
        out_ew[k] = w_hat

        if k < n:
            cost = accumulate_cost(cost, qe_vec, w, dt)
            md = Torque(dc.m1 + da.m1 * math.sin(2.0 * math.pi * df * t),
                        dc.m2 + da.m2 * math.sin(2.0 * math.pi * df * t),
                        dc.m3 + da.m3 * math.sin(2.0 * math.pi * df * t))
            state = integrate_step(state, config.inertia_true, applied, md, dt)

    return RunRecord(out_t, out_q, out_w, out_qe, out_mc, out_ap, out_eu,
                     out_eq, out_ew, config, cost, out_sense, out_raw)


def fuel_consumption(record: RunRecord) -> tuple[np.ndarray, float]:
    """Rectangle-rule integral of |applied torque| per axis, plus the total (N*m*s)."""
    if len(record) < 2:
        raise ValueError("record too short")
    per_axis = np.abs(record.applied[:-1]).sum(axis=0) * record.config.dt
    return per_axis, float(per_axis.sum())


def _wrap_deg(x: float) -> float:
    return (x + 180.0) % 360.0 - 180.0


def euler_errors(record: RunRecord) -> np.ndarray:
    """Per-sample Euler-angle error relative to the desired attitude, wrapped."""
    desired = np.asarray(record.config.desired_euler)
    err = record.euler - desired
    return (err + 180.0) % 360.0 - 180.0


def final_euler_error(record: RunRecord) -> np.ndarray:
    return euler_errors(record)[-1]


def settling_time(record: RunRecord, band: float = 0.01) -> list[float | None]:
    """Earliest time per axis after which the error stays inside band * |initial|.

    None marks an axis that never settles; an axis starting with zero error
    settles at t = 0.
    """
    err = euler_errors(record)
    out: list[float | None] = []
    for axis in range(3):
        init = abs(err[0, axis])
        if init == 0.0:
            out.append(0.0)
            continue
        threshold = band * init
        violations = np.nonzero(np.abs(err[:, axis]) > threshold)[0]
        if len(violations) == 0:
            out.append(0.0)
        elif violations[-1] == len(record) - 1:
            out.append(None)
        else:
            out.append(float(record.t[violations[-1] + 1]))
    return out


@dataclass
class Metrics:
    fuel_per_axis: np.ndarray
    fuel_total: float
    settling: list[float | None]
    final_error_deg: np.ndarray
    cost_j: float


def compute_metrics(record: RunRecord, band: float = 0.01) -> Metrics:
    fuel_axis, fuel_total = fuel_consumption(record)
    return Metrics(fuel_axis, fuel_total, settling_time(record, band),
                   final_euler_error(record), record.cost_j)


def tuning_objective(base: SimConfig):
    """Cost-of-gains objective for the simplex search: one noise-free PID run
    with the truth estimator and nominal plant inertia.
    """
    cfg = replace(base, controller="pid", estimator="truth", modulator="none",
                  noise=NoiseSpec(0.0, 0.0, 0.0),
                  inertia_true=base.inertia_nominal,
                  disturbance_const=Torque(0.0, 0.0, 0.0),
                  disturbance_amp=Torque(0.0, 0.0, 0.0))

    def objective(gains: PidGains) -> float:
        try:
            return run_closed_loop(cfg, gains=gains).cost_j
        except IntegrationDivergedError:
            return float("inf")

    return objective


# ---------------------------------------------------------------------------
# Monte Carlo campaign

@dataclass
class MonteCarloReport:
    """Per-run final Euler errors with running mean and 3-sigma statistics."""
    errors: np.ndarray          # (n_runs, 3); NaN rows mark failed runs
    mean: np.ndarray            # running mean over successful runs 1..k
    sigma3: np.ndarray          # running 3 * population std, same indexing
    n_failed: int
    config: MonteCarloConfig

    @property
    def max_abs_error(self) -> float:
        ok = self.errors[~np.isnan(self.errors[:, 0])]
        return float(np.max(np.abs(ok))) if len(ok) else float("nan")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for line in dump_sim_config(self.config.base).splitlines():
                fh.write(f"# {line}\n")
            fh.write(f"# n_runs = {self.config.n_runs}\n")
            fh.write(f"# master_seed = {self.config.master_seed}\n")
            fh.write(f"# n_failed = {self.n_failed}\n")
            wr = csv.writer(fh)
            wr.writerow(["run", "err_phi", "err_theta", "err_psi",
                         "mean_phi", "mean_theta", "mean_psi",
                         "sigma3_phi", "sigma3_theta", "sigma3_psi"])
            for k in range(len(self.errors)):
                row = [k] + [repr(float(v)) for v in self.errors[k]] \
                          + [repr(float(v)) for v in self.mean[k]] \
                          + [repr(float(v)) for v in self.sigma3[k]]
                wr.writerow(row)


def _mc_run_config(mc: MonteCarloConfig, k: int) -> SimConfig:
    rng = np.random.default_rng(np.random.SeedSequence([mc.master_seed, k]))
    angles = rng.uniform(-mc.angle_range_deg, mc.angle_range_deg, size=3)
    rates = rng.uniform(-mc.rate_range, mc.rate_range, size=3)
    di = rng.uniform(-mc.inertia_range, mc.inertia_range, size=3)
    base = mc.base
    inertia = tuple(max(0.1, i + d) for i, d in zip(base.inertia_nominal, di))
    noise_seed = int(rng.integers(0, 2 ** 31))
    return replace(
        base,
        seed=noise_seed,
        initial_euler=EulerAngles(*angles),
        initial_omega=AngularVelocity(*rates),
        inertia_true=type(base.inertia_true)(*inertia),
        noise=replace(base.noise, seed=noise_seed),
    )


def _mc_single(args):
    mc, k, gains, bundles = args
    cfg = _mc_run_config(mc, k)
    try:
        rec = run_closed_loop(cfg, gains=gains, bundles=bundles)
        return k, final_euler_error(rec)
    except IntegrationDivergedError:
        return k, None


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SATGNC_WORKERS", "1")))
    except ValueError:
        return 1


def monte_carlo(mc: MonteCarloConfig, gains: PidGains | None = None,
                bundles: dict | None = None,
                workers: int | None = None) -> MonteCarloReport:
    """Run the campaign: randomized initial attitude/rates, per-axis inertia
    perturbation, fresh noise per run -- all derived from the master seed so
    results are independent of worker count and scheduling.
    """
    if workers is None:
        workers = default_workers()
    tasks = [(mc, k, gains, bundles) for k in range(mc.n_runs)]
    results: list = [None] * mc.n_runs
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, err in pool.map(_mc_single, tasks, chunksize=8):
                results[k] = err
    else:
        for task in tasks:
            k, err = _mc_single(task)
            results[k] = err

    errors = np.full((mc.n_runs, 3), np.nan)
    mean = np.full((mc.n_runs, 3), np.nan)
    sigma3 = np.full((mc.n_runs, 3), np.nan)
    n_failed = 0
    for k, err in enumerate(results):
        if err is None:
            n_failed += 1
        else:
            errors[k] = err
        ok = errors[:k + 1][~np.isnan(errors[:k + 1, 0])]
        if len(ok):
            mean[k] = ok.mean(axis=0)
            sigma3[k] = 3.0 * ok.std(axis=0)
    return MonteCarloReport(errors, mean, sigma3, n_failed, mc)


# ---------------------------------------------------------------------------
# Controller comparison (the fuel / settling-time evaluation layout)

EVAL_CONDITIONS = ("without noise and uncertainty", "considering noise",
                   "considering uncertainty")


def evaluate_controllers(gains: PidGains, bundles: dict,
                         base: SimConfig = SimConfig(),
                         noise: NoiseSpec = NoiseSpec()) -> list[dict]:
    """Fuel and settling-time comparison of the PID and neuro-fuzzy controllers
    under nominal, noisy-sensor, and inertia-uncertainty conditions.

    Under noise both controllers read the neuro-fuzzy observer (noise enters
    the loop through the sensors); the other conditions use the truth state.
    """
    rows = []
    for condition in EVAL_CONDITIONS:
        cfg = replace(base, noise=NoiseSpec(0.0, 0.0, 0.0), estimator="truth",
                      inertia_true=base.inertia_nominal)
        if condition == "considering noise":
            cfg = replace(cfg, noise=noise, estimator="anfis")
        elif condition == "considering uncertainty":
            cfg = replace(cfg, inertia_true=UNCERTAIN_INERTIA)
        for controller in ("anfis", "pid"):
            rec = run_closed_loop(replace(cfg, controller=controller),
                                  gains=gains, bundles=bundles)
            m = compute_metrics(rec)
            rows.append({
                "condition": condition,
                "controller": controller,
                "fuel_x": float(m.fuel_per_axis[0]),
                "fuel_y": float(m.fuel_per_axis[1]),
                "fuel_z": float(m.fuel_per_axis[2]),
                "fuel_total": m.fuel_total,
                "settle_x": m.settling[0],
                "settle_y": m.settling[1],
                "settle_z": m.settling[2],
                "final_err_deg": [float(v) for v in m.final_error_deg],
            })
    return rows


def format_evaluation(rows: list[dict]) -> str:
    def fmt_settle(v):
        return f"{v:8.2f}" if v is not None else "   never"

    lines = []
    lines.append(f"{'condition':34s} {'ctrl':6s} {'fuel_x':>8s} {'fuel_y':>8s} "
                 f"{'fuel_z':>8s} {'total':>8s} {'ts_x':>8s} {'ts_y':>8s} {'ts_z':>8s}")
    for r in rows:
        lines.append(
            f"{r['condition']:34s} {r['controller']:6s} "
            f"{r['fuel_x']:8.4f} {r['fuel_y']:8.4f} {r['fuel_z']:8.4f} "
            f"{r['fuel_total']:8.4f} "
            f"{fmt_settle(r['settle_x'])} {fmt_settle(r['settle_y'])} "
            f"{fmt_settle(r['settle_z'])}")
    return "\n".join(lines)
