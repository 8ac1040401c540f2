"""Trajectory fitting for the learnable Bloch field.

The loss is the mean squared deviation between fixed-step RK4 rollouts of the
learned field and the recorded trajectories, plus a Tikhonov penalty on the
perceptron parameters (the physical parameters are not penalized).  Penalizing
the biases matters: an unpenalized output bias lets the nonlinearity absorb a
constant, state-independent matrix that fits the trajectories but distorts the
recovered dissipation term.
Gradients come from differentiating through the rollout itself
(discretize-then-optimize) with jax.value_and_grad under jax.lax.scan.

Optimization runs by continuation: the fitted horizon grows in windows of
`continuation_step` data points, the optimizer state is reset at each window
boundary, and the first window gets a larger iteration budget than the rest.
Two optimizers are provided: a hand-rolled Adam whose update loop is fused
into chunked scans, and a limited-memory BFGS with Armijo backtracking on the
flattened parameter vector.  Setting `final_lbfgs` appends one more stage
that refines the fit on the full horizon with L-BFGS after the continuation
pass, which tightens the learned operators well beyond what Adam alone
reaches.
"""

import csv
import logging
import time
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np
from jax.flatten_util import ravel_pytree

from .errors import ConfigError, DataError, NumericError
from .model import F_theta, LearnableModel, M_theta, load_model, save_model

__all__ = [
    "TrainingData",
    "TrainConfig",
    "TrainResult",
    "make_loss",
    "rollout",
    "suggested_substeps",
    "train_continuation",
    "read_history",
    "HISTORY_COLUMNS",
]

log = logging.getLogger("thermoq.training")

HISTORY_COLUMNS = ("increment", "iteration", "loss", "grad_norm", "wall_time")


# ---------------------------------------------------------------------------
# Data and configuration containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingData:
    """Trajectories on a shared time grid.

    states has shape (n_traj, n_times, dim); amps holds the four drive
    amplitudes per trajectory (all zeros for undriven systems).
    """

    times: np.ndarray
    states: np.ndarray
    amps: np.ndarray = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 3 or states.shape[1] != times.shape[0]:
            raise DataError(f"states shape {states.shape} does not match {times.shape[0]} time points")
        if times.shape[0] < 2:
            raise DataError("need at least two time points to fit dynamics")
        amps = self.amps
        amps = np.zeros((states.shape[0], 4)) if amps is None else np.asarray(amps, dtype=float)
        if amps.shape != (states.shape[0], 4):
            raise DataError(f"amps shape {amps.shape} does not match {states.shape[0]} trajectories of 4 amplitudes")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "amps", amps)

    @property
    def n_trajectories(self) -> int:
        return self.states.shape[0]

    @property
    def n_times(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.1
    iterations_first: int = 2000
    iterations_rest: int = 500
    continuation_step: int = 30
    tikhonov: float = 1e-3
    substeps: int = None  # None: pick from the grid spacing and drift scale
    tol_grad: float = 0.0  # stop a window early once the gradient norm drops below
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lbfgs_history: int = 10
    armijo_c1: float = 1e-4
    max_backtracks: int = 30
    chunk: int = 25  # Adam iterations fused per compiled scan
    final_lbfgs: int = 0  # extra full-horizon L-BFGS iterations after the last window

    def __post_init__(self):
        if self.optimizer not in ("adam", "lbfgs"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r} (use 'adam' or 'lbfgs')")
        for name in ("iterations_first", "iterations_rest", "continuation_step", "chunk"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.final_lbfgs < 0:
            raise ConfigError("final_lbfgs must be nonnegative")
        if self.substeps is not None and self.substeps < 1:
            raise ConfigError("substeps must be a positive integer")
        if self.tikhonov < 0.0:
            raise ConfigError("tikhonov weight must be nonnegative")


@dataclass
class TrainResult:
    model: LearnableModel
    history: list
    n_windows: int
    substeps: int

    @property
    def final_loss(self) -> float:
        return self.history[-1][2] if self.history else np.nan


# ---------------------------------------------------------------------------
# Rollout and loss
# ---------------------------------------------------------------------------


def suggested_substeps(dt: float, scale: float) -> int:
    """Substeps per data interval keeping the RK4 step below 0.25 / scale."""
    return max(1, int(np.ceil(dt * max(scale, 1.0) / 0.25)))


def rollout(params, v0, t_grid, amps, model: LearnableModel, substeps: int):
    """Fixed-step RK4 trajectory of the learned field over t_grid (including t0)."""

    def substep(v, k):
        t0, h = k
        k1 = F_theta(params, v, t0, amps, model)
        k2 = F_theta(params, v + 0.5 * h * k1, t0 + 0.5 * h, amps, model)
        k3 = F_theta(params, v + 0.5 * h * k2, t0 + 0.5 * h, amps, model)
        k4 = F_theta(params, v + h * k3, t0 + h, amps, model)
        return v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), None

    def step(v, span):
        t0, t1 = span
        h = (t1 - t0) / substeps
        starts = t0 + h * jnp.arange(substeps)
        v, _ = jax.lax.scan(substep, v, (starts, jnp.full(substeps, h)))
        return v, v

    _, path = jax.lax.scan(step, v0, (t_grid[:-1], t_grid[1:]))
    return jnp.concatenate([v0[None, :], path], axis=0)


def make_loss(model: LearnableModel, data: TrainingData, substeps: int, tikhonov: float):
    """Mean squared trajectory deviation plus the perceptron parameter penalty."""
    t_grid = jnp.asarray(data.times)
    states = jnp.asarray(data.states)
    amps = jnp.asarray(data.amps)

    def loss_fn(params):
        paths = jax.vmap(lambda v0, a: rollout(params, v0, t_grid, a, model, substeps))(states[:, 0, :], amps)
        err = paths[:, 1:, :] - states[:, 1:, :]
        data_term = jnp.mean(jnp.sum(err * err, axis=-1))
        penalty = sum(jnp.sum(layer["W"] * layer["W"]) + jnp.sum(layer["b"] * layer["b"]) for layer in params["mlp"])
        return data_term + tikhonov * penalty

    return loss_fn


def _global_norm(tree):
    leaves = jax.tree_util.tree_leaves(tree)
    return jnp.sqrt(sum(jnp.sum(leaf * leaf) for leaf in leaves))


# ---------------------------------------------------------------------------
# Adam (fused into chunked scans)
# ---------------------------------------------------------------------------


def _run_adam(loss_fn, params, n_iters: int, cfg: TrainConfig, record):
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    value_and_grad = jax.value_and_grad(loss_fn)

    def one_step(carry, _):
        params, m, v, count = carry
        val, grads = value_and_grad(params)
        gnorm = _global_norm(grads)
        count = count + 1
        m = jax.tree_util.tree_map(lambda a, g: b1 * a + (1.0 - b1) * g, m, grads)
        v = jax.tree_util.tree_map(lambda a, g: b2 * a + (1.0 - b2) * g * g, v, grads)
        c1, c2 = 1.0 - b1**count, 1.0 - b2**count
        params = jax.tree_util.tree_map(
            lambda p, mm, vv: p - lr * (mm / c1) / (jnp.sqrt(vv / c2) + eps), params, m, v
        )
        return (params, m, v, count), (val, gnorm)

    @partial(jax.jit, static_argnums=1)
    def run_chunk(carry, length):
        return jax.lax.scan(one_step, carry, None, length=length)

    carry = (
        params,
        jax.tree_util.tree_map(jnp.zeros_like, params),
        jax.tree_util.tree_map(jnp.zeros_like, params),
        jnp.asarray(0.0),
    )
    done = 0
    while done < n_iters:
        length = min(cfg.chunk, n_iters - done)
        carry, (vals, gnorms) = run_chunk(carry, length)
        vals, gnorms = np.asarray(vals), np.asarray(gnorms)
        if not np.all(np.isfinite(vals)):
            raise NumericError("training loss became non-finite; reduce the learning rate or step size")
        for k in range(length):
            record(done + k + 1, float(vals[k]), float(gnorms[k]))
        done += length
        if cfg.tol_grad > 0.0 and gnorms[-1] < cfg.tol_grad:
            break
    return carry[0]


# ---------------------------------------------------------------------------
# Limited-memory BFGS with Armijo backtracking
# ---------------------------------------------------------------------------


def _two_loop_direction(grad, s_hist, y_hist):
    q = grad.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        alpha = rho * float(s @ q)
        q -= alpha * y
        alphas.append(alpha)
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), alpha in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        beta = rho * float(y @ q)
        q += s * (alpha - beta)
    return -q


def _run_lbfgs(loss_fn, params, n_iters: int, cfg: TrainConfig, record):
    x0, unravel = ravel_pytree(params)

    @jax.jit
    def value_and_grad_flat(x):
        val, grads = jax.value_and_grad(loss_fn)(unravel(x))
        return val, ravel_pytree(grads)[0]

    @jax.jit
    def value_flat(x):
        return loss_fn(unravel(x))

    def backtrack(x, fx, direction, slope, first_step):
        step = first_step
        for _ in range(cfg.max_backtracks):
            x_new = x + step * direction
            f_new = float(value_flat(x_new))
            if np.isfinite(f_new) and f_new <= fx + cfg.armijo_c1 * step * slope:
                return x_new
            step *= 0.5
        return None

    x = np.asarray(x0)
    fx, gx = value_and_grad_flat(x)
    fx, gx = float(fx), np.asarray(gx)
    s_hist, y_hist = [], []
    for it in range(1, n_iters + 1):
        if not np.isfinite(fx):
            raise NumericError("training loss became non-finite during line search")
        gnorm = float(np.linalg.norm(gx))
        record(it, fx, gnorm)
        if cfg.tol_grad > 0.0 and gnorm < cfg.tol_grad:
            break
        direction = _two_loop_direction(gx, s_hist, y_hist)
        slope = float(gx @ direction)
        if slope >= 0.0:  # not a descent direction; restart from steepest descent
            s_hist, y_hist = [], []
            direction, slope = -gx, -float(gx @ gx)
        # A raw gradient direction can be huge, so scale its trial step down.
        first_step = 1.0 if s_hist else min(1.0, 1.0 / max(1.0, gnorm))
        x_new = backtrack(x, fx, direction, slope, first_step)
        if x_new is None and s_hist:
            log.debug("iteration %d: line search failed; falling back to steepest descent", it)
            s_hist, y_hist = [], []
            direction, slope = -gx, -float(gx @ gx)
            x_new = backtrack(x, fx, direction, slope, min(1.0, 1.0 / max(1.0, gnorm)))
        if x_new is None:
            break
        f_new, g_new = value_and_grad_flat(x_new)
        f_new, g_new = float(f_new), np.asarray(g_new)
        s, y = x_new - x, g_new - gx
        if float(s @ y) > 1e-10:
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > cfg.lbfgs_history:
                s_hist.pop(0)
                y_hist.pop(0)
        else:
            # The step carried no usable curvature, so the stored pairs no
            # longer describe the local landscape; drop them.
            s_hist, y_hist = [], []
        x, fx, gx = x_new, f_new, g_new
    return unravel(jnp.asarray(x))


# ---------------------------------------------------------------------------
# Continuation loop
# ---------------------------------------------------------------------------


def _window_slices(n_times: int, step: int):
    """End indices (inclusive) of the growing fit windows over the time grid."""
    return list(range(step, n_times - 1, step)) + [n_times - 1]


def _structural_spot_check(model: LearnableModel, params, window: int):
    rng = np.random.default_rng(1000 + window)
    r_max = np.sqrt(2.0 * (model.n_levels - 1) / model.n_levels)
    for _ in range(3):
        v = rng.normal(size=model.dim)
        v *= rng.uniform(0.1, 0.95) * r_max / np.linalg.norm(v)
        m = np.asarray(M_theta(params, jnp.asarray(v), model))
        min_eig = float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())
        if min_eig < -1e-9:
            log.warning("window %d: learned nonlinearity lost positivity (min eig %.3e)", window, min_eig)


def read_history(path):
    """History CSV back as a list of (increment, iteration, loss, grad_norm, wall_time)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != HISTORY_COLUMNS:
            raise DataError(f"unexpected history header {header!r}")
        for rec in reader:
            rows.append((int(rec[0]), int(rec[1]), float(rec[2]), float(rec[3]), float(rec[4])))
    return rows


def _format_row(row):
    inc, it, loss, gnorm, wall = row
    return [str(inc), str(it), format(loss, ".17g"), format(gnorm, ".17g"), format(wall, ".6f")]


def train_continuation(
    model: LearnableModel,
    data: TrainingData,
    config: TrainConfig = TrainConfig(),
    out_dir=None,
    resume_from=None,
    callback=None,
) -> TrainResult:
    """Fit the model to the trajectories by windowed continuation.

    When out_dir is given, a history.csv (one row per iteration) and one model
    checkpoint per completed window are written there; resume_from may name a
    checkpoint to restart from its window boundary, reproducing the
    uninterrupted run exactly.
    """
    start_window = 0
    if resume_from is not None:
        model = load_model(resume_from)
        start_window = int(model.metadata["completed_window"])
    if data.states.shape[2] != model.dim:
        raise DataError(f"state dimension {data.states.shape[2]} does not match the model ({model.dim})")
    params = model.params
    substeps = config.substeps
    if substeps is None:
        if resume_from is not None:
            # The automatic choice depends on the initial drift, so a resumed
            # run must reuse the original decision to reproduce it exactly.
            substeps = int(model.metadata["substeps"])
        else:
            dt = float(np.max(np.diff(data.times)))
            substeps = suggested_substeps(dt, float(np.linalg.norm(np.asarray(params["h"]))))

    ends = _window_slices(data.n_times, config.continuation_step)
    stages = [
        (end, config.iterations_first if i == 0 else config.iterations_rest, config.optimizer)
        for i, end in enumerate(ends)
    ]
    if config.final_lbfgs > 0:
        stages.append((data.n_times - 1, config.final_lbfgs, "lbfgs"))
    history = []
    history_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        history_path = out_dir / "history.csv"
        kept = []
        if resume_from is not None and history_path.exists():
            kept = [row for row in read_history(history_path) if row[0] <= start_window]
        with open(history_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            writer.writerows(_format_row(row) for row in kept)
        history.extend(kept)

    prev_loss_fn = None
    prev_loss_value = None
    t_start = time.perf_counter()
    for w, (end, n_iters, opt_name) in enumerate(stages, start=1):
        if w <= start_window:
            continue
        window_data = TrainingData(times=data.times[: end + 1], states=data.states[:, : end + 1, :], amps=data.amps)
        loss_fn = make_loss(model, window_data, substeps, config.tikhonov)

        rows = []

        def record(iteration, loss, gnorm, _w=w):
            row = (_w, iteration, loss, gnorm, time.perf_counter() - t_start)
            rows.append(row)
            if callback is not None:
                callback(*row)

        runner = _run_adam if opt_name == "adam" else _run_lbfgs
        params = runner(loss_fn, params, n_iters, config, record)
        history.extend(rows)
        if history_path is not None:
            with open(history_path, "a", newline="") as fh:
                csv.writer(fh).writerows(_format_row(row) for row in rows)

        # Structural spot checks and a guard against the fit on the previous
        # window regressing as the horizon grows.
        _structural_spot_check(model, params, w)
        if prev_loss_fn is not None and prev_loss_value is not None:
            revisit = float(prev_loss_fn(params))
            if revisit > 1.1 * prev_loss_value + 1e-12:
                log.warning(
                    "window %d: loss on the previous window grew from %.3e to %.3e", w, prev_loss_value, revisit
                )
        prev_loss_fn = jax.jit(loss_fn)
        prev_loss_value = rows[-1][2] if rows else None

        model = replace(model, params=params, metadata={**model.metadata, "completed_window": w, "substeps": substeps})
        if out_dir is not None:
            save_model(model, out_dir / f"checkpoint_w{w:02d}.json")
        log.info("window %d/%d: %d iterations, loss %.6e", w, len(stages), len(rows), rows[-1][2] if rows else np.nan)

    return TrainResult(model=model, history=history, n_windows=len(stages), substeps=substeps)
