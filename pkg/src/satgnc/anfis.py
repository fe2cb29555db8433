"""First-order Takagi-Sugeno neuro-fuzzy inference core.

Five-layer forward pass (memberships -> rule firing -> normalization ->
weighted linear consequents -> sum) over a full grid-partition rule base,
trained by the classic hybrid rule: a linear least-squares solve for the
consequent coefficients each epoch, followed by one gradient-descent step
on the generalized-bell membership parameters.

All models are single-output (MISO); multi-output roles stack one model
per output channel on top of this module.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

__all__ = [
    "AnfisModel",
    "TrainingSet",
    "TrainConfig",
    "TrainingDivergedError",
    "ModelFormatError",
    "bell",
    "grid_partition_init",
    "forward",
    "forward_batch",
    "normalized_firing",
    "design_matrix",
    "lse_consequents",
    "linear_consequent_prior",
    "solve_consequents",
    "premise_gradient",
    "train",
    "save_model",
    "load_model",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1
FIRING_FLOOR = 1e-300
MIN_WIDTH = 1e-9
MIN_SLOPE = 0.1


class TrainingDivergedError(RuntimeError):
    """Raised when the hybrid training loop produces a non-finite loss."""


class ModelFormatError(ValueError):
    """Raised on malformed or version-incompatible model files."""


def bell(x, a, b, c):
    """Generalized bell membership: 1 / (1 + |((x-c)/a)|^(2b)).

    An overflowing power far from the center correctly saturates to 0.
    """
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.abs((np.asarray(x, dtype=float) - c) / a) ** (2.0 * b))


@dataclass
class AnfisModel:
    """Premise and consequent parameters over a full Cartesian rule grid.

    Premise parameters are stored per input as (n_mfs_i,) arrays a (width),
    b (slope exponent), c (center).  Consequents are one (n_inputs + 1) row
    per rule: linear coefficients followed by the bias.
    """
    mfs_per_input: tuple[int, ...]
    a: list[np.ndarray]
    b: list[np.ndarray]
    c: list[np.ndarray]
    coeffs: np.ndarray
    input_ranges: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mfs_per_input = tuple(int(m) for m in self.mfs_per_input)
        self._rule_index = None

    @property
    def n_inputs(self) -> int:
        return len(self.mfs_per_input)

    @property
    def n_rules(self) -> int:
        n = 1
        for m in self.mfs_per_input:
            n *= m
        return n

    @property
    def rule_index(self) -> np.ndarray:
        """(n_rules, n_inputs) table mapping each rule to its MF index per input."""
        if self._rule_index is None:
            self._rule_index = np.array(
                list(itertools.product(*(range(m) for m in self.mfs_per_input))),
                dtype=np.intp,
            )
        return self._rule_index

    def copy(self) -> "AnfisModel":
        return AnfisModel(
            mfs_per_input=self.mfs_per_input,
            a=[x.copy() for x in self.a],
            b=[x.copy() for x in self.b],
            c=[x.copy() for x in self.c],
            coeffs=self.coeffs.copy(),
            input_ranges=self.input_ranges.copy(),
            metadata=dict(self.metadata),
        )


@dataclass
class TrainingSet:
    """Input/target pairs plus the per-dimension ranges the model should cover."""
    inputs: np.ndarray
    targets: np.ndarray
    ranges: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if len(self.targets) != self.inputs.shape[0]:
            raise ValueError("inputs and targets disagree on sample count")
        if self.ranges is None:
            self.ranges = np.column_stack([self.inputs.min(axis=0), self.inputs.max(axis=0)])
        else:
            self.ranges = np.asarray(self.ranges, dtype=float)

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.01
    decay: float = 0.5          # step-decay factor applied when epoch RMSE worsens
    ridge: float = 1e-8
    linear_prior: bool = True   # shrink consequents toward the global linear fit
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0.0:
            raise ValueError("learning rate must be nonnegative")
        if self.ridge < 0.0:
            raise ValueError("ridge must be nonnegative")


def grid_partition_init(ranges, mfs_per_input) -> AnfisModel:
    """Evenly spaced bell MFs over each input range; zero consequents.

    Centers span [min, max], widths are half the center spacing, slope
    exponent b = 2 everywhere.
    """
    ranges = np.atleast_2d(np.asarray(ranges, dtype=float))
    mfs_per_input = tuple(int(m) for m in np.atleast_1d(mfs_per_input))
    if len(mfs_per_input) == 1 and ranges.shape[0] > 1:
        mfs_per_input = mfs_per_input * ranges.shape[0]
    if ranges.shape[0] != len(mfs_per_input):
        raise ValueError("ranges and mfs_per_input disagree on input count")
    a, b, c = [], [], []
    for (lo, hi), m in zip(ranges, mfs_per_input):
        if not hi > lo:
            raise ValueError(f"degenerate input range [{lo}, {hi}]")
        if m < 2:
            raise ValueError("need at least 2 membership functions per input")
        centers = np.linspace(lo, hi, m)
        spacing = (hi - lo) / (m - 1)
        a.append(np.full(m, 0.5 * spacing))
        b.append(np.full(m, 2.0))
        c.append(centers)
    n_rules = int(np.prod(mfs_per_input))
    coeffs = np.zeros((n_rules, ranges.shape[0] + 1))
    return AnfisModel(mfs_per_input, a, b, c, coeffs, ranges.copy())


def _memberships(model: AnfisModel, x: np.ndarray) -> list[np.ndarray]:
    """Per-input membership matrices, each (N, n_mfs_i)."""
    return [bell(x[:, i:i + 1], model.a[i], model.b[i], model.c[i])
            for i in range(model.n_inputs)]


def _firing(model: AnfisModel, mu: list[np.ndarray]) -> np.ndarray:
    idx = model.rule_index
    w = mu[0][:, idx[:, 0]].copy()
    for i in range(1, model.n_inputs):
        w *= mu[i][:, idx[:, i]]
    return w


def normalized_firing(model: AnfisModel, x: np.ndarray) -> np.ndarray:
    """Layer-3 outputs: (N, n_rules) normalized firing strengths.

    If every rule underflows for a sample, that row falls back to uniform
    weights (with a diagnostic) instead of dividing by zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = _firing(model, _memberships(model, x))
    s = w.sum(axis=1, keepdims=True)
    dead = s[:, 0] < FIRING_FLOOR
    if dead.any():
        warnings.warn(f"{int(dead.sum())} sample(s) fired no rule above the underflow "
                      "floor; using uniform rule weights", stacklevel=2)
        w[dead] = 1.0
        s[dead] = model.n_rules
    return w / s


def _rule_outputs(model: AnfisModel, x: np.ndarray) -> np.ndarray:
    """Per-rule linear consequents f_r(x), shape (N, n_rules)."""
    return x @ model.coeffs[:, :-1].T + model.coeffs[:, -1]


def forward_batch(model: AnfisModel, x: np.ndarray) -> np.ndarray:
    """Model output for each row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} inputs, got {x.shape[1]}")
    wbar = normalized_firing(model, x)
    return (wbar * _rule_outputs(model, x)).sum(axis=1)


@dataclass(frozen=True)
class LayerOutputs:
    """Intermediates of one forward evaluation, by layer."""
    memberships: list[np.ndarray]     # layer 1, per input
    firing: np.ndarray                # layer 2
    normalized: np.ndarray            # layer 3
    weighted: np.ndarray              # layer 4
    output: float                     # layer 5


def forward(model: AnfisModel, x) -> tuple[float, LayerOutputs]:
    """Single-sample forward pass returning the output and all layer values."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} inputs, got {x.shape[1]}")
    mu = _memberships(model, x)
    w = _firing(model, mu)
    s = float(w.sum())
    if s < FIRING_FLOOR:
        warnings.warn("no rule fired above the underflow floor; using uniform weights",
                      stacklevel=2)
        wbar = np.full_like(w, 1.0 / model.n_rules)
    else:
        wbar = w / s
    weighted = wbar * _rule_outputs(model, x)
    y = float(weighted.sum())
    return y, LayerOutputs([m[0] for m in mu], w[0], wbar[0], weighted[0], y)


def design_matrix(model: AnfisModel, x: np.ndarray) -> np.ndarray:
    """Least-squares design matrix: row blocks wbar_r * [x, 1] per rule."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    wbar = normalized_firing(model, x)
    xaug = np.column_stack([x, np.ones(len(x))])
    n, r, d = len(x), model.n_rules, xaug.shape[1]
    return np.einsum("nr,nd->nrd", wbar, xaug).reshape(n, r * d)


def linear_consequent_prior(model: AnfisModel, inputs: np.ndarray,
                            targets: np.ndarray) -> np.ndarray:
    """Global linear least-squares fit tiled across all rules.

    The normalized firing strengths sum to one, so identical consequents
    in every rule reproduce the global linear fit exactly; tiling it makes
    a shrinkage target that keeps sparsely-fired rules from extrapolating
    wildly.  Returns (n_rules * (n_inputs + 1),) or (..., k) for k targets.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    xaug = np.column_stack([inputs, np.ones(len(inputs))])
    beta, *_ = np.linalg.lstsq(xaug, targets, rcond=None)
    reps = (model.n_rules,) + (1,) * (beta.ndim - 1)
    return np.tile(beta, reps)


def solve_consequents(a_mat: np.ndarray, targets: np.ndarray, ridge: float,
                      prior: np.ndarray | None = None) -> np.ndarray:
    """Ridge (or minimum-norm) linear solve shared by all output channels.

    targets may be (N,) or (N, k); the result has matching trailing shape.
    With a prior, the ridge penalty shrinks toward it instead of zero.
    """
    if prior is not None:
        return prior + solve_consequents(a_mat, targets - a_mat @ prior, ridge)
    if ridge > 0.0:
        g = a_mat.T @ a_mat
        g[np.diag_indices_from(g)] += ridge
        rhs = a_mat.T @ targets
        cf = scipy.linalg.cho_factor(g, check_finite=False)
        return scipy.linalg.cho_solve(cf, rhs, check_finite=False)
    sol, _, rank, _ = np.linalg.lstsq(a_mat, targets, rcond=None)
    if rank < a_mat.shape[1]:
        warnings.warn(f"rank-deficient consequent system (rank {rank} of "
                      f"{a_mat.shape[1]}); minimum-norm solution returned", stacklevel=2)
    return sol


def lse_consequents(model: AnfisModel, data: TrainingSet, ridge: float = 1e-8,
                    prior: np.ndarray | None = None) -> tuple[AnfisModel, float]:
    """Optimal consequents for the current premises; returns (model, RMSE)."""
    if len(data) == 0:
        raise ValueError("training set is empty")
    n_params = model.n_rules * (model.n_inputs + 1)
    if len(data) < n_params:
        warnings.warn(f"{len(data)} samples for {n_params} consequent parameters; "
                      "the least-squares problem is underdetermined", stacklevel=2)
    a_mat = design_matrix(model, data.inputs)
    if prior is not None:
        prior = np.asarray(prior, dtype=float).reshape(n_params)
    sol = solve_consequents(a_mat, data.targets, ridge, prior)
    out = model.copy()
    out.coeffs = sol.reshape(model.n_rules, model.n_inputs + 1)
    resid = a_mat @ sol - data.targets
    return out, float(np.sqrt(np.mean(resid ** 2)))


def premise_gradient(model: AnfisModel, data: TrainingSet):
    """Gradient of the summed squared error w.r.t. all (a, b, c).

    Analytic backpropagation through the five layers.  Returns three lists
    mirroring the layout of model.a / model.b / model.c.
    """
    x = data.inputs
    if x.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} inputs, got {x.shape[1]}")
    mu = _memberships(model, x)
    w = _firing(model, mu)
    s = w.sum(axis=1, keepdims=True)
    s = np.maximum(s, FIRING_FLOOR)
    wbar = w / s
    f = _rule_outputs(model, x)
    y = (wbar * f).sum(axis=1)
    g = 2.0 * (y - data.targets)                      # dE/dy per sample
    dedw = (g / s[:, 0])[:, None] * (f - y[:, None])  # dE/dw_r

    idx = model.rule_index
    grad_a, grad_b, grad_c = [], [], []
    dedw_w = dedw * w
    for i in range(model.n_inputs):
        mui = np.maximum(mu[i], 1e-300)
        n_mfs = model.mfs_per_input[i]
        # dE/dmu for every MF of input i: sum over rules using that MF
        dedmu = np.zeros((len(x), n_mfs))
        for m in range(n_mfs):
            rules_m = np.nonzero(idx[:, i] == m)[0]
            dedmu[:, m] = dedw_w[:, rules_m].sum(axis=1) / mui[:, m]
        a_i, b_i, c_i = model.a[i], model.b[i], model.c[i]
        diff = x[:, i:i + 1] - c_i
        u = (diff / a_i) ** 2
        mom = mu[i] * (1.0 - mu[i])                   # = mu^2 * u^b
        dmu_da = 2.0 * b_i * mom / a_i
        with np.errstate(divide="ignore", invalid="ignore"):
            dmu_dc = np.where(diff != 0.0, 2.0 * b_i * mom / diff, 0.0)
            dmu_db = np.where(u > 0.0, -mom * np.log(np.maximum(u, 1e-300)), 0.0)
        grad_a.append((dedmu * dmu_da).sum(axis=0))
        grad_b.append((dedmu * dmu_db).sum(axis=0))
        grad_c.append((dedmu * dmu_dc).sum(axis=0))
    return grad_a, grad_b, grad_c


def _rmse(model: AnfisModel, data: TrainingSet) -> float:
    return float(np.sqrt(np.mean((forward_batch(model, data.inputs) - data.targets) ** 2)))


def train(model: AnfisModel, data: TrainingSet,
          config: TrainConfig = TrainConfig()) -> tuple[AnfisModel, list[float]]:
    """Hybrid training: per epoch, an LSE consequent solve then one premise
    gradient-descent step.  Returns the best model seen and the RMSE history.
    """
    current = model.copy()
    history: list[float] = []
    best_model = None
    best_rmse = np.inf
    lr = config.learning_rate
    prev_rmse = np.inf
    prior = (linear_consequent_prior(current, data.inputs, data.targets)
             if config.linear_prior else None)
    for epoch in range(config.epochs):
        current, rmse = lse_consequents(current, data, config.ridge, prior)
        if not np.isfinite(rmse):
            raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
        history.append(rmse)
        if rmse < best_rmse:
            best_rmse = rmse
            best_model = current.copy()
        if rmse > prev_rmse:
            lr *= config.decay
        prev_rmse = rmse
        if lr > 0.0 and epoch < config.epochs - 1:
            ga, gb, gc = premise_gradient(current, data)
            # normalize the step so the learning rate is scale-free
            gnorm = np.sqrt(sum(float(g @ g) for gs in (ga, gb, gc) for g in gs))
            if gnorm > 0.0 and np.isfinite(gnorm):
                step = lr / gnorm
                for i in range(current.n_inputs):
                    current.a[i] = np.maximum(current.a[i] - step * ga[i], MIN_WIDTH)
                    current.b[i] = np.maximum(current.b[i] - step * gb[i], MIN_SLOPE)
                    current.c[i] = current.c[i] - step * gc[i]
    # training metadata travels with the model file
    best_model.metadata.update({
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "ridge": config.ridge,
        "seed": config.seed,
        "final_rmse": best_rmse,
    })
    return best_model, history


def save_model(model: AnfisModel, path) -> None:
    """Serialize to a self-describing JSON document (bit-exact round trip)."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "n_inputs": model.n_inputs,
        "mfs_per_input": list(model.mfs_per_input),
        "input_ranges": model.input_ranges.tolist(),
        "premise": [
            {"input": i, "a": model.a[i].tolist(), "b": model.b[i].tolist(),
             "c": model.c[i].tolist()}
            for i in range(model.n_inputs)
        ],
        "consequents": model.coeffs.tolist(),
        "metadata": model.metadata,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> AnfisModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file {path}: {exc}") from exc
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version!r} in {path} "
            f"(expected {MODEL_FORMAT_VERSION})")
    try:
        mfs = tuple(doc["mfs_per_input"])
        premise = doc["premise"]
        model = AnfisModel(
            mfs_per_input=mfs,
            a=[np.asarray(p["a"], dtype=float) for p in premise],
            b=[np.asarray(p["b"], dtype=float) for p in premise],
            c=[np.asarray(p["c"], dtype=float) for p in premise],
            coeffs=np.asarray(doc["consequents"], dtype=float),
            input_ranges=np.asarray(doc["input_ranges"], dtype=float),
            metadata=doc.get("metadata", {}),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model file {path}: {exc}") from exc
    if model.coeffs.shape != (model.n_rules, model.n_inputs + 1):
        raise ModelFormatError(f"inconsistent consequent table in {path}")
    return model
