"""Command-line front end: reproducible generate / train / evaluate / sweep runs.

Every subcommand reads one JSON run configuration, applies the ``--seed`` and
``--out`` overrides, does its work, and drops a ``run_manifest.json`` with the
fully resolved configuration next to its outputs.  Numeric report files are
CSV with repr-exact floats, so re-running a command with the same
configuration and seed reproduces them byte for byte (the wall-clock column
of training histories is the one exception).  Each CSV gets a PNG rendering
alongside it.

Exit codes separate the failure families: 0 success, 2 configuration,
3 data, 4 numerics.  Verbosity is controlled through the THERMOQ_LOG
environment variable (a logging level name such as ``debug`` or ``info``).
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from multiprocessing import get_context
from pathlib import Path

import click
import numpy as np

from . import __version__, experiments
from .datasets import load_dataset, save_dataset
from .dynamics import IntegratorConfig
from .errors import ConfigError, DataError, NumericError
from .metrics import (
    cumulative_trace_distance,
    expected_trace_distance,
    nonlinear_term_error,
    operator_errors,
    psd_violating_fraction,
    psd_violation,
)
from .model import load_model, save_model
from .training import TrainConfig, rollout, suggested_substeps, train_continuation

__all__ = [
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_DATA",
    "EXIT_NUMERIC",
    "EXPERIMENTS",
    "RunConfig",
    "EvalOptions",
    "SweepOptions",
    "parse_config",
    "cmd_generate",
    "cmd_train",
    "cmd_evaluate",
    "cmd_sweep",
    "main",
]

log = logging.getLogger("thermoq.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

EXPERIMENTS = ("two-level", "two-level-lindblad", "qutrit", "experimental")

# Generator entry point and accepted configuration keys per experiment tag.
_GENERATORS = {
    "two-level": (experiments.gen_two_level, {"n_train", "n_test", "t_max", "dt"}),
    "two-level-lindblad": (experiments.gen_two_level_lindblad, {"n_train", "n_test", "t_max", "dt"}),
    "qutrit": (experiments.gen_qutrit, {"amplitudes", "t_max", "dt"}),
    "experimental": (experiments.gen_data_protocol, {"p", "q", "sigma", "t_max", "n_intervals"}),
}

_INTEGRATOR_METHODS = ("RK45", "RK23", "DOP853", "Radau", "BDF", "LSODA")


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalOptions:
    """Evaluation settings.

    Driven systems are scored against fresh truth simulations over
    ``n_controls`` random pulse settings on a grid of spacing ``dt`` up to
    ``t_max``; undriven systems are scored against the dataset records of the
    given ``role`` (``null`` selects every record).  ``substeps`` overrides
    the rollout step subdivision (default: the value the checkpoint was
    trained with).  ``sweep_dir`` points at a finished sweep to collect the
    learned drift components into a pulse-grid table.
    """

    role: str = "test"
    t_max: float = None
    dt: float = 0.1
    n_controls: int = 20
    n_overlay: int = 4
    substeps: int = None
    sweep_dir: str = None


@dataclass(frozen=True)
class SweepOptions:
    """Pulse-strength grid for per-cell generate+train runs of the constant-drive protocol."""

    p_values: tuple = ()
    q_values: tuple = ()
    sigma: float = 0.0
    t_max: float = experiments.DATA_T_FINAL
    n_intervals: int = experiments.DATA_N_INTERVALS


@dataclass
class RunConfig:
    """One experiment run, fully determined by this object plus the package version."""

    experiment: str = None
    dataset: str = None
    checkpoint: str = None
    output: str = None
    seed: int = 0
    generate: dict = None
    train_config: TrainConfig = None
    t_train: float = None
    resume: str = None
    learn_temperature: bool = False
    integrator: IntegratorConfig = None
    evaluate: EvalOptions = None
    sweep: SweepOptions = None

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "dataset": self.dataset,
            "checkpoint": self.checkpoint,
            "output": self.output,
            "seed": self.seed,
            "generate": dict(self.generate),
            "train": {
                **asdict(self.train_config),
                "t_train": self.t_train,
                "resume": self.resume,
                "learn_temperature": self.learn_temperature,
            },
            "integrator": asdict(self.integrator),
            "evaluate": asdict(self.evaluate),
            "sweep": None if self.sweep is None else asdict(self.sweep),
        }


_TOP_KEYS = {"experiment", "dataset", "checkpoint", "output", "seed", "generate", "train", "integrator", "evaluate", "sweep"}
_TRAIN_EXTRA = {"t_train", "resume", "learn_temperature"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} | _TRAIN_EXTRA
_INTEGRATOR_KEYS = {f.name for f in fields(IntegratorConfig)}
_EVAL_KEYS = {f.name for f in fields(EvalOptions)}
_SWEEP_KEYS = {f.name for f in fields(SweepOptions)}


def _section(doc: dict, key: str, allowed: set) -> dict:
    raw = doc.get(key) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {key!r} must be a JSON object")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in config section {key!r}: {unknown}")
    return raw


def parse_config(path, seed: int = None, out: str = None) -> RunConfig:
    """Load a JSON run configuration, applying the command-line overrides."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("run configuration must be a JSON object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")

    experiment = doc.get("experiment")
    if experiment is not None and experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment tag {experiment!r} (expected one of {', '.join(EXPERIMENTS)})")

    train_raw = _section(doc, "train", _TRAIN_KEYS)
    integ_raw = dict(_section(doc, "integrator", _INTEGRATOR_KEYS))
    if integ_raw.get("max_step") is None:
        integ_raw.pop("max_step", None)
    integrator = IntegratorConfig(**integ_raw)
    if integrator.method not in _INTEGRATOR_METHODS:
        raise ConfigError(f"unknown integrator method {integrator.method!r}")

    sweep_raw = _section(doc, "sweep", _SWEEP_KEYS)
    sweep = None
    if sweep_raw:
        sweep = SweepOptions(
            **{**sweep_raw, "p_values": tuple(sweep_raw.get("p_values", ())), "q_values": tuple(sweep_raw.get("q_values", ()))}
        )

    return RunConfig(
        experiment=experiment,
        dataset=doc.get("dataset"),
        checkpoint=doc.get("checkpoint"),
        output=out if out is not None else doc.get("output"),
        seed=int(doc.get("seed", 0)) if seed is None else int(seed),
        generate=_section(doc, "generate", set.union(*(keys for _, keys in _GENERATORS.values()))),
        train_config=TrainConfig(**{k: v for k, v in train_raw.items() if k not in _TRAIN_EXTRA}),
        t_train=train_raw.get("t_train"),
        resume=train_raw.get("resume"),
        learn_temperature=bool(train_raw.get("learn_temperature", False)),
        integrator=integrator,
        evaluate=EvalOptions(**_section(doc, "evaluate", _EVAL_KEYS)),
        sweep=sweep,
    )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _out_dir(config: RunConfig) -> Path:
    if config.output is None:
        raise ConfigError("no output directory (set 'output' in the configuration or pass --out)")
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.ndarray, np.generic)):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(path, doc: dict):
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=1)
        fh.write("\n")


def _write_manifest(out: Path, command: str, config: RunConfig, extra: dict = None):
    doc = {"command": command, "package_version": __version__, "config": config.to_dict()}
    doc.update(extra or {})
    _write_json(out / "run_manifest.json", doc)


def _cell_text(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell_text(x) for x in row])


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(config: RunConfig) -> Path:
    """Synthesize the configured experiment's dataset into the output directory."""
    if config.experiment is None:
        raise ConfigError("generate needs an 'experiment' tag in the configuration")
    builder, allowed = _GENERATORS[config.experiment]
    kwargs = dict(config.generate)
    unknown = sorted(set(kwargs) - allowed)
    if unknown:
        raise ConfigError(f"generate keys {unknown} do not apply to experiment {config.experiment!r}")
    if "amplitudes" in kwargs and kwargs["amplitudes"] is not None:
        kwargs["amplitudes"] = np.asarray(kwargs["amplitudes"], dtype=float)
    out = _out_dir(config)

    log.info("generating %s dataset (seed %d)", config.experiment, config.seed)
    dataset = builder(seed=config.seed, integrator=config.integrator, **kwargs)
    dataset.metadata["code_version"] = __version__
    save_dataset(dataset, out)
    _write_manifest(out, "generate", config, {"n_records": len(dataset), "n_levels": dataset.n_levels})
    log.info("wrote %d records to %s", len(dataset), out)
    return out


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _resolve_tag(config: RunConfig, dataset=None) -> str:
    tag = config.experiment
    if tag is None and dataset is not None:
        tag = dataset.metadata.get("experiment")
    if tag not in EXPERIMENTS:
        raise ConfigError(f"cannot resolve the experiment tag (got {tag!r}); set 'experiment' in the configuration")
    return tag


def _initial_model(tag: str, config: RunConfig):
    if tag == "qutrit":
        return experiments.initial_qutrit_model(config.seed)
    if tag == "experimental":
        return experiments.initial_data_model(config.seed, learn_temperature=config.learn_temperature)
    return experiments.initial_two_level_model(config.seed)


def _truth_system(tag: str):
    """Reference generator for experiments whose learned operators have an exact target."""
    if tag == "two-level":
        return experiments.two_level_truth()
    if tag == "qutrit":
        return experiments.qutrit_truth()
    return None


def cmd_train(config: RunConfig):
    """Fit the experiment's initial model to the configured dataset by continuation."""
    if config.dataset is None:
        raise ConfigError("train needs a 'dataset' path in the configuration")
    dataset = load_dataset(config.dataset)
    tag = _resolve_tag(config, dataset)
    out = _out_dir(config)
    data = dataset.training_data(role="train", t_max=config.t_train)
    model = _initial_model(tag, config)

    log.info(
        "training %s model on %d trajectories x %d samples (t <= %g)",
        tag, data.n_trajectories, data.n_times, data.times[-1],
    )
    result = train_continuation(model, data, config.train_config, out_dir=out, resume_from=config.resume)
    save_model(result.model, out / "model.json")

    summary = {
        "experiment": tag,
        "final_loss": result.final_loss,
        "n_windows": result.n_windows,
        "substeps": result.substeps,
        "n_trajectories": data.n_trajectories,
        "n_times": data.n_times,
        "t_train": float(data.times[-1]),
    }
    truth = _truth_system(tag)
    if truth is not None:
        summary.update(operator_errors(result.model, truth))
    if result.model.learn_temperature:
        summary["kT"] = result.model.temperature()
    _write_json(out / "summary.json", summary)
    _write_manifest(out, "train", config, {"outputs": ["model.json", "history.csv", "summary.json"]})
    log.info("final loss %.6e after %d windows", result.final_loss, result.n_windows)
    return result


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _rollout_bundle(model, times, starts, amps, substeps: int) -> np.ndarray:
    import jax
    import jax.numpy as jnp

    t_grid = jnp.asarray(times)
    fn = jax.jit(jax.vmap(lambda v0, a: rollout(model.params, v0, t_grid, a, model, substeps)))
    return np.asarray(fn(jnp.asarray(np.asarray(starts)), jnp.asarray(np.asarray(amps))))


def _eval_substeps(model, times, override: int) -> int:
    if override is not None:
        return int(override)
    if "substeps" in model.metadata:
        return int(model.metadata["substeps"])
    dt = float(np.max(np.diff(times)))
    return suggested_substeps(dt, float(np.linalg.norm(model.h_theta())))


def _dataset_bundles(config: RunConfig, dataset):
    """Reference bundle from dataset records: (times, states (n,T,d), amps, labels)."""
    records = dataset.select(role=config.evaluate.role)
    if not records:
        raise DataError(f"dataset has no records with role {config.evaluate.role!r}")
    times = records[0].times
    for rec in records[1:]:
        if not np.array_equal(rec.times, times):
            raise DataError(f"record {rec.record_id!r} is not on the shared time grid")
    if config.evaluate.t_max is not None:
        keep = times <= config.evaluate.t_max + 1e-9
        if np.count_nonzero(keep) < 2:
            raise DataError(f"t_max={config.evaluate.t_max} leaves fewer than two samples")
        times = times[keep]
    states = np.stack([rec.states[: times.shape[0]] for rec in records])
    amps = np.stack([np.zeros(4) if rec.amps is None else rec.amps for rec in records])
    return times, states, amps, [rec.record_id for rec in records]


def _control_bundles(config: RunConfig, model):
    """Reference bundle from truth simulations over random pulse settings."""
    ev = config.evaluate
    t_max = 20.0 if ev.t_max is None else ev.t_max
    n_steps = int(round(t_max / ev.dt))
    times = ev.dt * np.arange(n_steps + 1)
    amps = experiments.random_control_set(ev.n_controls, seed=config.seed)
    log.info("simulating truth for %d random controls up to t=%g", ev.n_controls, t_max)
    states = experiments.simulate_truth_controls(amps, times, kT=model.kT, integrator=config.integrator)
    labels = [f"control-{k:02d}" for k in range(amps.shape[0])]
    return times, states, amps, labels


def cmd_evaluate(config: RunConfig) -> dict:
    """Score a checkpoint against reference trajectories; write CSV curves and figures."""
    from . import plots

    ev = config.evaluate
    if config.checkpoint is None and ev.sweep_dir is None:
        raise ConfigError("evaluate needs a 'checkpoint' (and dataset) or a 'sweep_dir'")
    out = _out_dir(config)
    summary = {}

    if ev.sweep_dir is not None:
        rows = _collect_sweep_table(Path(ev.sweep_dir))
        d = len(rows[0]) - 3
        _write_csv(out / "pulse_grid.csv", ["cell", "p", "q"] + [f"h{k + 1}" for k in range(d)], rows)
        _pulse_grid_figure(rows, out / "pulse_grid.png")
        summary["n_sweep_cells"] = len(rows)

    if config.checkpoint is not None:
        model = load_model(config.checkpoint)
        dataset = load_dataset(config.dataset) if config.dataset is not None else None
        tag = _resolve_tag(config, dataset)
        if tag == "qutrit":
            times, reference, amps, labels = _control_bundles(config, model)
        else:
            if dataset is None:
                raise ConfigError("evaluate needs a 'dataset' path for undriven experiments")
            times, reference, amps, labels = _dataset_bundles(config, dataset)
        substeps = _eval_substeps(model, times, ev.substeps)

        log.info("rolling out %d trajectories x %d samples (substeps %d)", len(labels), times.shape[0], substeps)
        predicted = _rollout_bundle(model, times, reference[:, 0, :], amps, substeps)
        if not np.all(np.isfinite(predicted)):
            raise NumericError("model rollout produced non-finite states; reduce the step size")

        bands = expected_trace_distance(predicted, reference)
        vpsd = psd_violation(predicted)
        per_traj = np.stack([cumulative_trace_distance(p, r) for p, r in zip(predicted, reference)])
        cumulative = per_traj.mean(axis=0)

        _write_csv(out / "trace_distance.csv", ["t", "mean", "min", "max"], zip(times, bands.mean, bands.min, bands.max))
        _write_csv(out / "psd_violation.csv", ["t", "v_psd"], zip(times, vpsd))
        _write_csv(out / "cumulative.csv", ["t", "cumulative_mean_distance"], zip(times, cumulative))
        plots.save_distance_bands(times, bands, out / "trace_distance.png")
        plots.save_curve(times, vpsd, out / "psd_violation.png", "positivity violation")
        plots.save_curve(times, cumulative, out / "cumulative.png", "cumulative trace distance")

        n_overlay = min(ev.n_overlay, len(labels))
        if n_overlay > 0:
            overlay_rows = []
            for k in range(n_overlay):
                for i, t in enumerate(times):
                    for j in range(reference.shape[2]):
                        overlay_rows.append((labels[k], t, j + 1, reference[k, i, j], predicted[k, i, j]))
            _write_csv(out / "overlays.csv", ["record", "t", "component", "data", "model"], overlay_rows)
            plots.save_overlays(times, reference[:n_overlay], predicted[:n_overlay], labels[:n_overlay], out / "overlays.png")

        summary.update(
            {
                "experiment": tag,
                "n_trajectories": len(labels),
                "t_final": float(times[-1]),
                "substeps": substeps,
                "mean_trace_distance": float(np.mean(bands.mean)),
                "max_mean_trace_distance": float(np.max(bands.mean)),
                "max_trace_distance": float(np.max(bands.max)),
                "final_cumulative": float(cumulative[-1]),
                "max_psd_violation": float(np.max(vpsd)),
                "psd_violating_fraction": psd_violating_fraction(predicted),
            }
        )
        truth = _truth_system(tag)
        if truth is not None:
            summary.update(operator_errors(model, truth))
        if tag == "two-level":
            summary["nonlinear_term_error"] = nonlinear_term_error(model, truth, reference)

    _write_json(out / "summary.json", summary)
    _write_manifest(out, "evaluate", config, {"summary": summary})
    return summary


def _collect_sweep_table(sweep_dir: Path) -> list:
    """Learned drift components from every completed cell of a sweep directory."""
    rows = []
    if not sweep_dir.is_dir():
        raise DataError(f"sweep directory not found: {sweep_dir}")
    for cell_dir in sorted(p for p in sweep_dir.iterdir() if p.is_dir() and p.name.startswith("cell_")):
        model_path = cell_dir / "model.json"
        meta_path = cell_dir / "data" / "manifest.json"
        if not model_path.exists() or not meta_path.exists():
            continue
        with open(meta_path) as fh:
            meta = json.load(fh)["metadata"]
        model = load_model(model_path)
        rows.append((cell_dir.name, float(meta["p"]), float(meta["q"]), *model.h_theta()))
    if not rows:
        raise DataError(f"no completed sweep cells under {sweep_dir}")
    return rows


def _pulse_grid_figure(rows, path):
    from . import plots

    p_values = np.unique([row[1] for row in rows])
    q_values = np.unique([row[2] for row in rows])
    d = len(rows[0]) - 3
    tables = {f"h{k + 1}": np.full((p_values.size, q_values.size), np.nan) for k in range(d)}
    for row in rows:
        i = int(np.searchsorted(p_values, row[1]))
        j = int(np.searchsorted(q_values, row[2]))
        for k in range(d):
            tables[f"h{k + 1}"][i, j] = row[3 + k]
    plots.save_pulse_grid(p_values, q_values, tables, path)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _cell_seed(base: int, i: int, j: int) -> int:
    """Deterministic per-cell seed; distinct for grids up to 1000 columns."""
    return base * 1_000_000 + i * 1_000 + j


def _run_sweep_cell(payload: dict) -> dict:
    """Generate-and-train one pulse-strength cell; returns an aggregate row.

    Runs in a worker process under --jobs > 1, so the payload and the return
    value stay plain picklable dictionaries and all output lands in the
    cell's own directory.
    """
    outcome = {k: payload[k] for k in ("cell", "p", "q", "seed")}
    try:
        cell_dir = Path(payload["cell_dir"])
        cell_dir.mkdir(parents=True, exist_ok=True)
        dataset = experiments.gen_data_protocol(
            p=payload["p"],
            q=payload["q"],
            sigma=payload["sigma"],
            seed=payload["seed"],
            t_max=payload["t_max"],
            n_intervals=payload["n_intervals"],
            integrator=IntegratorConfig(**payload["integrator"]),
        )
        save_dataset(dataset, cell_dir / "data")
        model = experiments.initial_data_model(payload["seed"], learn_temperature=payload["learn_temperature"])
        result = train_continuation(model, dataset.training_data(), TrainConfig(**payload["train"]), out_dir=cell_dir)
        save_model(result.model, cell_dir / "model.json")
        outcome.update(status="ok", final_loss=result.final_loss, h=result.model.h_theta().tolist(), message="")
    except Exception as exc:  # record the failure, keep the sweep going
        outcome.update(status="error", final_loss=float("nan"), h=None, message=f"{type(exc).__name__}: {exc}")
    return outcome


def cmd_sweep(config: RunConfig, jobs: int = 1) -> list:
    """Independent generate+train runs over a pulse-strength grid, one subdirectory per cell."""
    sw = config.sweep
    if sw is None or not sw.p_values or not sw.q_values:
        raise ConfigError("sweep needs 'p_values' and 'q_values' in the configuration")
    out = _out_dir(config)

    payloads = []
    for i, p in enumerate(sw.p_values):
        for j, q in enumerate(sw.q_values):
            cell = f"cell_p{i:02d}_q{j:02d}"
            payloads.append(
                {
                    "cell": cell,
                    "cell_dir": str(out / cell),
                    "p": float(p),
                    "q": float(q),
                    "seed": _cell_seed(config.seed, i, j),
                    "sigma": sw.sigma,
                    "t_max": sw.t_max,
                    "n_intervals": sw.n_intervals,
                    "train": asdict(config.train_config),
                    "integrator": asdict(config.integrator),
                    "learn_temperature": config.learn_temperature,
                }
            )

    log.info("sweeping %d x %d cells with %d worker(s)", len(sw.p_values), len(sw.q_values), jobs)
    if jobs <= 1:
        outcomes = [_run_sweep_cell(payload) for payload in payloads]
    else:
        # Spawned workers: the training stack is not fork-safe once initialized.
        with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("spawn")) as pool:
            outcomes = list(pool.map(_run_sweep_cell, payloads))

    d = 3  # the constant-drive protocol is two-level
    rows = []
    for oc in outcomes:
        h = oc["h"] if oc["h"] is not None else [float("nan")] * d
        rows.append((oc["cell"], oc["p"], oc["q"], oc["seed"], oc["status"], oc["final_loss"], *h, oc["message"]))
        if oc["status"] != "ok":
            log.warning("cell %s failed: %s", oc["cell"], oc["message"])
    header = ["cell", "p", "q", "seed", "status", "final_loss"] + [f"h{k + 1}" for k in range(d)] + ["message"]
    _write_csv(out / "pulse_grid.csv", header, rows)

    ok_rows = [(oc["cell"], oc["p"], oc["q"], *oc["h"]) for oc in outcomes if oc["status"] == "ok"]
    if ok_rows:
        _pulse_grid_figure(ok_rows, out / "pulse_grid.png")
    n_failed = sum(1 for oc in outcomes if oc["status"] != "ok")
    _write_manifest(out, "sweep", config, {"n_cells": len(outcomes), "n_failed": n_failed})
    log.info("sweep finished: %d/%d cells ok", len(outcomes) - n_failed, len(outcomes))
    return outcomes


# ---------------------------------------------------------------------------
# Command-line surface
# ---------------------------------------------------------------------------


def _configure_logging():
    name = os.environ.get("THERMOQ_LOG", "warning").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def _invoke(fn, config_path, seed, out, **kwargs):
    try:
        config = parse_config(config_path, seed=seed, out=out)
        fn(config, **kwargs)
    except ConfigError as exc:
        _die(exc, EXIT_CONFIG)
    except DataError as exc:
        _die(exc, EXIT_DATA)
    except NumericError as exc:
        _die(exc, EXIT_NUMERIC)
    except OSError as exc:
        _die(exc, EXIT_DATA)


def _die(exc, code: int):
    click.echo(f"error: {exc}", err=True)
    raise SystemExit(code)


_config_option = click.option("--config", "config_path", required=True, type=click.Path(), help="Run configuration (JSON).")
_seed_option = click.option("--seed", type=int, default=None, help="Override the configured random seed.")
_out_option = click.option("--out", type=click.Path(), default=None, help="Override the configured output directory.")


@click.group()
@click.version_option(__version__)
def main():
    """Simulate and learn thermodynamically consistent open-system dynamics."""
    _configure_logging()


@main.command()
@_config_option
@_seed_option
@_out_option
def generate(config_path, seed, out):
    """Synthesize a trajectory dataset for the configured experiment."""
    _invoke(cmd_generate, config_path, seed, out)


@main.command()
@_config_option
@_seed_option
@_out_option
def train(config_path, seed, out):
    """Fit a model to the configured dataset by windowed continuation."""
    _invoke(cmd_train, config_path, seed, out)


@main.command()
@_config_option
@_seed_option
@_out_option
def evaluate(config_path, seed, out):
    """Score a trained checkpoint; write metric curves, tables and figures."""
    _invoke(cmd_evaluate, config_path, seed, out)


@main.command()
@_config_option
@_seed_option
@_out_option
@click.option("--jobs", type=int, default=1, help="Concurrent sweep cells.")
def sweep(config_path, seed, out, jobs):
    """Train one model per pulse-strength grid cell and tabulate the results."""
    _invoke(cmd_sweep, config_path, seed, out, jobs=jobs)


if __name__ == "__main__":
    main()
