"""The three neuro-fuzzy roles built on the TS core: torque controller,
attitude/rate estimator, and the integrated sensors-to-torque subsystem,
plus their training-data pipelines.

Each role is a bundle of single-output models, one per output channel.
The 15-channel sensor roles default to a pruned 9-channel input (the two
body-frame direction triplets plus the gyro): with a fixed position and
epoch the inertial references are constant and carry no information.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import anfis
from .anfis import AnfisModel, TrainConfig, TrainingSet
from .config import NOMINAL_INERTIA, SimConfig
from .dynamics import AngularVelocity, EulerAngles, InertiaTensor, Quaternion, Torque
from .pid import PidGains
from .sensors import NoiseSpec, SensorReading

__all__ = [
    "RoleBundle",
    "RoleDataset",
    "EstimateInvalidError",
    "SENSOR_CHANNELS",
    "PRUNED_COLUMNS",
    "generate_controller_data",
    "generate_sensor_data",
    "generate_estimator_data",
    "generate_integrated_data",
    "train_controller",
    "train_estimator",
    "train_integrated",
    "anfis_control",
    "anfis_estimate",
    "anfis_integrated",
    "save_bundle",
    "load_bundle",
]

BUNDLE_FORMAT_VERSION = 1

SENSOR_CHANNELS = (
    "ub_body_x", "ub_body_y", "ub_body_z",
    "us_body_x", "us_body_y", "us_body_z",
    "ub_inertial_x", "ub_inertial_y", "ub_inertial_z",
    "us_inertial_x", "us_inertial_y", "us_inertial_z",
    "gyro_x", "gyro_y", "gyro_z",
)
CONTROLLER_CHANNELS = ("qe1", "qe2", "qe3", "w1", "w2", "w3")
TORQUE_CHANNELS = ("mc1", "mc2", "mc3")
STATE_CHANNELS = ("q1", "q2", "q3", "q4", "w1", "w2", "w3")

# body-frame magnetometer + sun sensor + gyro; inertial references dropped
PRUNED_COLUMNS = (0, 1, 2, 3, 4, 5, 12, 13, 14)


class EstimateInvalidError(RuntimeError):
    """Raised when the predicted quaternion has near-zero norm."""


@dataclass
class RoleDataset:
    """Input/target matrices with run provenance for leakage-free splitting."""
    inputs: np.ndarray
    targets: np.ndarray
    run_ids: np.ndarray
    input_names: tuple[str, ...]
    target_names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        self.run_ids = np.asarray(self.run_ids, dtype=np.intp)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def split_by_run(self, holdout_fraction: float = 0.1):
        """(train, holdout) split by whole runs, preserving order."""
        runs = np.unique(self.run_ids)
        n_hold = max(1, int(round(holdout_fraction * len(runs)))) if len(runs) > 1 else 0
        hold_runs = set(runs[len(runs) - n_hold:].tolist())
        mask = np.array([r in hold_runs for r in self.run_ids])
        return self._subset(~mask), self._subset(mask)

    def _subset(self, mask) -> "RoleDataset":
        return RoleDataset(self.inputs[mask], self.targets[mask], self.run_ids[mask],
                           self.input_names, self.target_names, dict(self.metadata))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(("run",) + self.input_names + self.target_names)
            for rid, x, y in zip(self.run_ids, self.inputs, self.targets):
                wr.writerow([int(rid)] + [repr(float(v)) for v in x]
                            + [repr(float(v)) for v in y])

    @staticmethod
    def from_csv(path, n_inputs: int) -> "RoleDataset":
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            rows = [row for row in rd]
        names = tuple(header[1:])
        data = np.array([[float(v) for v in row[1:]] for row in rows])
        ids = np.array([int(row[0]) for row in rows], dtype=np.intp)
        return RoleDataset(data[:, :n_inputs], data[:, n_inputs:], ids,
                           names[:n_inputs], names[n_inputs:])


@dataclass
class RoleBundle:
    """One trained model per output channel, sharing inputs and normalization."""
    role: str
    models: list[AnfisModel]
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    input_columns: tuple[int, ...] | None = None   # selection from the 15-channel vector
    mc_max: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._extrapolation_warned = False
        self._stack = None
        if self.models:
            m0 = self.models[0]
            shared = all(
                m.mfs_per_input == m0.mfs_per_input
                and all(np.array_equal(x, y) for x, y in zip(m.a, m0.a))
                and all(np.array_equal(x, y) for x, y in zip(m.b, m0.b))
                and all(np.array_equal(x, y) for x, y in zip(m.c, m0.c))
                for m in self.models[1:]
            )
            if shared:
                # all channels share premises: evaluate the rule machinery once
                self._stack = np.stack([m.coeffs for m in self.models])

    @property
    def n_inputs(self) -> int:
        return self.models[0].n_inputs

    def _check_envelope(self, x: np.ndarray) -> None:
        r = self.models[0].input_ranges
        center = 0.5 * (r[:, 0] + r[:, 1])
        half = 0.5 * (r[:, 1] - r[:, 0])
        if np.any(np.abs(x - center) > 1.5 * np.maximum(half, 1e-12)):
            if not self._extrapolation_warned:
                warnings.warn(f"{self.role} bundle evaluated outside 1.5x its "
                              "training envelope; extrapolating", stacklevel=3)
                self._extrapolation_warned = True

    def predict(self, x) -> np.ndarray:
        """Channel outputs for one input vector (already column-selected)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_inputs,):
            raise ValueError(f"{self.role} bundle expects {self.n_inputs} inputs, "
                             f"got shape {x.shape}")
        self._check_envelope(x)
        if self._stack is not None:
            wbar = anfis.normalized_firing(self.models[0], x[None, :])[0]
            xaug = np.append(x, 1.0)
            return (self._stack @ xaug) @ wbar
        return np.array([anfis.forward_batch(m, x[None, :])[0] for m in self.models])

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.column_stack([anfis.forward_batch(m, x) for m in self.models])


def _random_conditions(rng: np.random.Generator, n: int,
                       angle_range: float = 15.0, rate_range: float = 0.1):
    """Uniform initial Euler angles (deg) and body rates (rad/s)."""
    angles = rng.uniform(-angle_range, angle_range, size=(n, 3))
    rates = rng.uniform(-rate_range, rate_range, size=(n, 3))
    return angles, rates


def generate_controller_data(gains: PidGains, n_conditions: int = 15,
                             duration: float = 20.0, dt: float = 0.01,
                             seed: int = 0,
                             inertia: InertiaTensor = NOMINAL_INERTIA) -> RoleDataset:
    """PID teacher trajectories: (q_e, w) -> commanded torque at every step.

    The targets are the teacher's unsaturated commands: the saturation
    clamp is re-applied at inference (anfis_control), so learning the
    smooth pre-clamp map avoids wasting model capacity on the flat
    saturated regions.  Runs noise-free closed loops from randomized
    initial conditions; a diverged condition is resampled with a warning.
    """
    from .harness import run_closed_loop
    from .dynamics import IntegrationDivergedError

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    inputs, targets, run_ids = [], [], []
    accepted = 0
    while accepted < n_conditions:
        angles, rates = _random_conditions(rng, 1)
        cfg = SimConfig(
            dt=dt, duration=duration, seed=seed,
            inertia_nominal=inertia, inertia_true=inertia,
            initial_euler=EulerAngles(*angles[0]),
            initial_omega=AngularVelocity(*rates[0]),
            controller="pid", estimator="truth", modulator="none",
        )
        try:
            rec = run_closed_loop(cfg, gains=gains)
        except IntegrationDivergedError:
            warnings.warn("closed-loop run diverged during data generation; "
                          "initial condition resampled", stacklevel=2)
            continue
        n = cfg.n_steps
        inputs.append(np.column_stack([rec.qe[:n], rec.w[:n]]))
        targets.append(rec.mc_raw[:n])
        run_ids.append(np.full(n, accepted, dtype=np.intp))
        accepted += 1
    return RoleDataset(
        np.vstack(inputs), np.vstack(targets), np.concatenate(run_ids),
        CONTROLLER_CHANNELS, TORQUE_CHANNELS,
        {"role": "controller", "seed": seed, "n_conditions": n_conditions,
         "mc_max": gains.mc_max},
    )


def generate_sensor_data(gains: PidGains, n_scenarios: int = 12,
                         duration: float = 20.0, dt: float = 0.01, seed: int = 0,
                         noise: NoiseSpec = NoiseSpec(),
                         inertia: InertiaTensor = NOMINAL_INERTIA,
                         base: SimConfig = SimConfig()) -> RoleDataset:
    """Sensor trajectories under PID control, with both state and torque targets.

    Targets are the 7 true-state channels followed by the teacher's 3
    unsaturated torque commands (the clamp is re-applied at inference);
    the estimator and integrated datasets are column views of this.
    """
    from .harness import run_closed_loop
    from .dynamics import IntegrationDivergedError

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE5]))
    inputs, targets, run_ids = [], [], []
    accepted = 0
    while accepted < n_scenarios:
        angles, rates = _random_conditions(rng, 1)
        noise_seed = int(rng.integers(0, 2 ** 31))
        cfg = replace(
            base,
            dt=dt, duration=duration, seed=noise_seed,
            inertia_nominal=inertia, inertia_true=inertia,
            initial_euler=EulerAngles(*angles[0]),
            initial_omega=AngularVelocity(*rates[0]),
            noise=replace(noise, seed=noise_seed),
            controller="pid", estimator="truth", modulator="none",
        )
        try:
            rec = run_closed_loop(cfg, gains=gains, record_sensors=True)
        except IntegrationDivergedError:
            warnings.warn("closed-loop run diverged during data generation; "
                          "scenario resampled", stacklevel=2)
            continue
        n = cfg.n_steps
        inputs.append(rec.sensor[:n])
        targets.append(np.column_stack([rec.q[:n], rec.w[:n], rec.mc_raw[:n]]))
        run_ids.append(np.full(n, accepted, dtype=np.intp))
        accepted += 1
    return RoleDataset(
        np.vstack(inputs), np.vstack(targets), np.concatenate(run_ids),
        SENSOR_CHANNELS, STATE_CHANNELS + TORQUE_CHANNELS,
        {"role": "sensor", "seed": seed, "n_scenarios": n_scenarios,
         "mc_max": gains.mc_max,
         "noise": (noise.sigma_mag, noise.sigma_sun, noise.sigma_gyro)},
    )


def generate_estimator_data(*args, **kwargs) -> RoleDataset:
    """Sensor inputs with true (q, w) targets."""
    ds = generate_sensor_data(*args, **kwargs)
    out = RoleDataset(ds.inputs, ds.targets[:, :7], ds.run_ids,
                      ds.input_names, STATE_CHANNELS, dict(ds.metadata))
    out.metadata["role"] = "estimator"
    return out


def generate_integrated_data(*args, **kwargs) -> RoleDataset:
    """Sensor inputs with the PID teacher's commanded torque as targets."""
    ds = generate_sensor_data(*args, **kwargs)
    out = RoleDataset(ds.inputs, ds.targets[:, 7:], ds.run_ids,
                      ds.input_names, TORQUE_CHANNELS, dict(ds.metadata))
    out.metadata["role"] = "integrated"
    return out


def _holdout_rmse(bundle: RoleBundle, holdout: RoleDataset,
                  columns: tuple[int, ...] | None) -> list[float]:
    if len(holdout) == 0:
        return [float("nan")] * len(bundle.models)
    x = holdout.inputs if columns is None else holdout.inputs[:, list(columns)]
    pred = bundle.predict_batch(x)
    return [float(np.sqrt(np.mean((pred[:, k] - holdout.targets[:, k]) ** 2)))
            for k in range(pred.shape[1])]


def _fit_shared_lse(inputs: np.ndarray, targets: np.ndarray, ranges: np.ndarray,
                    mfs_per_input, ridge: float) -> list[AnfisModel]:
    """All channels share fixed grid premises; one multi-RHS LSE solve
    shrunk toward the global linear fit of each channel."""
    proto = anfis.grid_partition_init(ranges, mfs_per_input)
    a_mat = anfis.design_matrix(proto, inputs)
    prior = anfis.linear_consequent_prior(proto, inputs, targets)
    sol = anfis.solve_consequents(a_mat, targets, ridge,
                                  prior.reshape(-1, targets.shape[1]))
    models = []
    for k in range(targets.shape[1]):
        m = proto.copy()
        m.coeffs = sol[:, k].reshape(proto.n_rules, proto.n_inputs + 1)
        resid = a_mat @ sol[:, k] - targets[:, k]
        m.metadata["train_rmse"] = float(np.sqrt(np.mean(resid ** 2)))
        models.append(m)
    return models


def _ranges(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(axis=0), x.max(axis=0)
    pad = np.maximum(1e-6, 0.05 * (hi - lo))
    return np.column_stack([lo - pad, hi + pad])


def train_controller(data: RoleDataset, mfs_per_input: int = 2,
                     config: TrainConfig = TrainConfig(epochs=6, learning_rate=0.02,
                                                       ridge=1e-2),
                     holdout_fraction: float = 0.1) -> RoleBundle:
    """One hybrid-trained model per torque axis; held-out RMSE per axis reported."""
    train_ds, hold_ds = data.split_by_run(holdout_fraction)
    ranges = _ranges(train_ds.inputs)
    models = []
    for k in range(train_ds.targets.shape[1]):
        m0 = anfis.grid_partition_init(ranges, mfs_per_input)
        m, _ = anfis.train(m0, TrainingSet(train_ds.inputs, train_ds.targets[:, k]),
                           config)
        models.append(m)
    bundle = RoleBundle("controller", models, data.input_names, TORQUE_CHANNELS,
                        None, float(data.metadata.get("mc_max", 1.0)))
    bundle.metadata["holdout_rmse"] = _holdout_rmse(bundle, hold_ds, None)
    bundle.metadata["mfs_per_input"] = mfs_per_input
    return bundle


def train_estimator(data: RoleDataset, mfs_per_input: int = 2,
                    columns: tuple[int, ...] = PRUNED_COLUMNS,
                    ridge: float = 0.1, holdout_fraction: float = 0.1,
                    max_samples: int = 12000) -> RoleBundle:
    """Seven state channels fit by a shared-premise LSE on the pruned inputs."""
    return _train_sensor_role(data, "estimator", STATE_CHANNELS, mfs_per_input,
                              columns, ridge, holdout_fraction, max_samples)


def train_integrated(data: RoleDataset, mfs_per_input: int = 2,
                     columns: tuple[int, ...] = PRUNED_COLUMNS,
                     ridge: float = 0.1, holdout_fraction: float = 0.1,
                     max_samples: int = 12000) -> RoleBundle:
    """Three torque channels fit by a shared-premise LSE on the pruned inputs."""
    return _train_sensor_role(data, "integrated", TORQUE_CHANNELS, mfs_per_input,
                              columns, ridge, holdout_fraction, max_samples)


def _train_sensor_role(data, role, output_names, mfs_per_input, columns, ridge,
                       holdout_fraction, max_samples) -> RoleBundle:
    train_ds, hold_ds = data.split_by_run(holdout_fraction)
    x = train_ds.inputs[:, list(columns)]
    y = train_ds.targets
    if len(x) > max_samples:
        stride = int(np.ceil(len(x) / max_samples))
        x, y = x[::stride], y[::stride]
    models = _fit_shared_lse(x, y, _ranges(x), mfs_per_input, ridge)
    bundle = RoleBundle(role, models, tuple(data.input_names[i] for i in columns),
                        tuple(output_names), tuple(columns),
                        float(data.metadata.get("mc_max", 1.0)))
    bundle.metadata["holdout_rmse"] = _holdout_rmse(bundle, hold_ds, tuple(columns))
    bundle.metadata["mfs_per_input"] = mfs_per_input
    bundle.metadata["pruned_columns"] = list(columns)
    return bundle


def _select(bundle: RoleBundle, x15: np.ndarray) -> np.ndarray:
    if bundle.input_columns is None:
        return x15
    return x15[list(bundle.input_columns)]


def anfis_control(bundle: RoleBundle, qe_vec, w) -> Torque:
    """Per-axis forward pass on (q_e, w), saturated to the training torque bound."""
    if bundle.role != "controller":
        raise ValueError(f"expected a controller bundle, got {bundle.role!r}")
    x = np.array([qe_vec[0], qe_vec[1], qe_vec[2], w[0], w[1], w[2]])
    y = bundle.predict(x)
    m = bundle.mc_max
    return Torque(*(min(m, max(-m, float(v))) for v in y))


def anfis_estimate(bundle: RoleBundle, reading: SensorReading
                   ) -> tuple[Quaternion, AngularVelocity]:
    """Attitude and rate estimate; the quaternion channels are renormalized."""
    if bundle.role != "estimator":
        raise ValueError(f"expected an estimator bundle, got {bundle.role!r}")
    y = bundle.predict(_select(bundle, reading.as_vector()))
    qn = float(np.linalg.norm(y[:4]))
    if qn < 0.1:
        raise EstimateInvalidError(f"predicted quaternion norm {qn:.3g} below 0.1")
    q = Quaternion(y[0] / qn, y[1] / qn, y[2] / qn, y[3] / qn)
    return q, AngularVelocity(float(y[4]), float(y[5]), float(y[6]))


def anfis_integrated(bundle: RoleBundle, reading: SensorReading) -> Torque:
    """Sensor reading straight to saturated control torque."""
    if bundle.role != "integrated":
        raise ValueError(f"expected an integrated bundle, got {bundle.role!r}")
    y = bundle.predict(_select(bundle, reading.as_vector()))
    m = bundle.mc_max
    return Torque(*(min(m, max(-m, float(v))) for v in y))


def save_bundle(bundle: RoleBundle, dirpath) -> None:
    """Bundle directory: per-channel model files plus a manifest."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for name, model in zip(bundle.output_names, bundle.models):
        fname = f"channel_{name}.json"
        anfis.save_model(model, d / fname)
        files.append(fname)
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "role": bundle.role,
        "input_names": list(bundle.input_names),
        "output_names": list(bundle.output_names),
        "input_columns": (list(bundle.input_columns)
                          if bundle.input_columns is not None else None),
        "mc_max": bundle.mc_max,
        "files": files,
        "metadata": bundle.metadata,
    }
    with open(d / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def load_bundle(dirpath) -> RoleBundle:
    d = Path(dirpath)
    manifest_path = d / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"bundle manifest not found: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise ValueError(f"unsupported bundle format version in {manifest_path}")
    models = [anfis.load_model(d / f) for f in manifest["files"]]
    cols = manifest["input_columns"]
    return RoleBundle(
        role=manifest["role"],
        models=models,
        input_names=tuple(manifest["input_names"]),
        output_names=tuple(manifest["output_names"]),
        input_columns=tuple(cols) if cols is not None else None,
        mc_max=float(manifest["mc_max"]),
        metadata=manifest.get("metadata", {}),
    )
