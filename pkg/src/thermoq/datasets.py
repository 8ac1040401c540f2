"""Trajectory datasets: schema, on-disk format, noise, and measurement correction.

A dataset is a directory.  It holds a ``manifest.json`` naming every
trajectory, and per trajectory a small JSON header (system size, provenance,
drive amplitudes, free-form metadata) next to a CSV body with columns
``t, v1, ..., vd``.  Floats are written with 17 significant digits so a
write/read cycle reproduces the arrays bit for bit; the files stay diff-able
and readable from any language.

The ingestion path converts classified measurement populations into Bloch
trajectories: a confusion matrix ``C`` (rows indexed by prepared state) is
inverted on each row of raw populations, the corrected populations are
projected back onto the probability simplex, and the |0> populations of the
z, x and y measurement bases give the Bloch components via v = 2 P(|0>) - 1.
"""

import copy
import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .training import TrainingData

__all__ = [
    "FORMAT_VERSION",
    "PROVENANCE_TAGS",
    "ROLES",
    "TrajectoryRecord",
    "TrajectoryDataset",
    "save_dataset",
    "load_dataset",
    "add_noise",
    "ConfusionMatrix",
    "populations_to_bloch",
    "ingest_experimental",
]

FORMAT_VERSION = 1

PROVENANCE_TAGS = ("synthetic-nonlinear", "synthetic-lindblad", "experimental")
ROLES = ("train", "test")

# Record ids double as file stems, so keep them free of path separators.
_ID_PATTERN = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass
class TrajectoryRecord:
    """A single sampled trajectory of Bloch vectors on a strictly increasing grid.

    ``amps`` holds the four drive amplitudes (Omega_01^p, Omega_12^p,
    Omega_01^q, Omega_12^q) when the trajectory was generated under a control
    pulse, and is None for undriven or externally measured data.
    """

    record_id: str
    n_levels: int
    times: np.ndarray
    states: np.ndarray
    provenance: str
    role: str = "train"
    amps: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.record_id, str) or not _ID_PATTERN.match(self.record_id):
            raise DataError(f"record id {self.record_id!r} is not a plain file-name stem")
        if self.n_levels < 2:
            raise DataError(f"n_levels must be >= 2, got {self.n_levels}")
        if self.provenance not in PROVENANCE_TAGS:
            raise DataError(f"unknown provenance tag {self.provenance!r}; expected one of {PROVENANCE_TAGS}")
        if self.role not in ROLES:
            raise DataError(f"unknown role {self.role!r}; expected one of {ROLES}")
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if times.ndim != 1 or times.shape[0] < 1:
            raise DataError("times must be a non-empty 1-d array")
        if np.any(np.diff(times) <= 0.0):
            raise DataError(f"times of record {self.record_id!r} are not strictly increasing")
        d = self.n_levels * self.n_levels - 1
        if states.shape != (times.shape[0], d):
            raise DataError(
                f"record {self.record_id!r}: states shape {states.shape} does not match "
                f"{times.shape[0]} samples of dimension {d}"
            )
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(states))):
            raise DataError(f"record {self.record_id!r} contains non-finite samples")
        amps = self.amps
        if amps is not None:
            amps = np.asarray(amps, dtype=float)
            if amps.shape != (4,):
                raise DataError(f"record {self.record_id!r}: amps must be a 4-vector, got shape {amps.shape}")
        self.times = times
        self.states = states
        self.amps = amps

    @property
    def dim(self) -> int:
        return self.n_levels * self.n_levels - 1

    @property
    def n_times(self) -> int:
        return self.times.shape[0]


@dataclass
class TrajectoryDataset:
    """An ordered collection of trajectories of one system size."""

    n_levels: int
    records: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.n_levels != self.n_levels:
                raise DataError(
                    f"record {rec.record_id!r} has n_levels={rec.n_levels}, dataset has {self.n_levels}"
                )
            if rec.record_id in seen:
                raise DataError(f"duplicate record id {rec.record_id!r}")
            seen.add(rec.record_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def select(self, role: str = None, provenance: str = None) -> list:
        """Records filtered by role and/or provenance, in dataset order."""
        out = self.records
        if role is not None:
            out = [r for r in out if r.role == role]
        if provenance is not None:
            out = [r for r in out if r.provenance == provenance]
        return out

    def subset(self, role: str = None, provenance: str = None) -> "TrajectoryDataset":
        return TrajectoryDataset(self.n_levels, self.select(role, provenance), dict(self.metadata))

    def training_data(self, role: str = "train", t_max: float = None) -> TrainingData:
        """Bundle the selected records into a shared-grid training batch.

        All selected records must sit on the identical time grid; ``t_max``
        truncates the grid (inclusive, with a small tolerance for grids built
        by accumulation) before bundling.
        """
        recs = self.select(role=role)
        if not recs:
            raise DataError(f"dataset has no records with role {role!r}")
        times = recs[0].times
        for rec in recs[1:]:
            if not np.array_equal(rec.times, times):
                raise DataError(f"record {rec.record_id!r} is not on the shared time grid")
        keep = slice(None)
        if t_max is not None:
            n_keep = int(np.sum(times <= t_max + 1e-9))
            if n_keep < 2:
                raise DataError(f"t_max={t_max} keeps fewer than two samples")
            keep = slice(0, n_keep)
        states = np.stack([rec.states[keep] for rec in recs])
        amps = np.stack([rec.amps if rec.amps is not None else np.zeros(4) for rec in recs])
        return TrainingData(times[keep], states, amps)


def _fmt(x: float) -> str:
    # 17 significant digits: the shortest width guaranteed to round-trip a
    # float64 exactly through text.
    return f"{x:.17g}"


def save_dataset(dataset: TrajectoryDataset, directory) -> Path:
    """Write the dataset directory (manifest + per-trajectory header/body pairs)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in dataset.records:
        header_name = f"{rec.record_id}.json"
        body_name = f"{rec.record_id}.csv"
        header = {
            "id": rec.record_id,
            "n_levels": rec.n_levels,
            "provenance": rec.provenance,
            "role": rec.role,
            "amps": None if rec.amps is None else [_fmt(a) for a in rec.amps],
            "meta": rec.meta,
        }
        with open(directory / header_name, "w") as fh:
            json.dump(header, fh, indent=1)
            fh.write("\n")
        cols = ",".join(["t"] + [f"v{i + 1}" for i in range(rec.dim)])
        with open(directory / body_name, "w") as fh:
            fh.write(cols + "\n")
            for t, row in zip(rec.times, rec.states):
                fh.write(",".join([_fmt(t)] + [_fmt(x) for x in row]) + "\n")
        entries.append({"id": rec.record_id, "header": header_name, "body": body_name})
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_levels": dataset.n_levels,
        "trajectories": entries,
        "metadata": dataset.metadata,
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return directory


def _read_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing dataset file {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {path}: {exc}") from exc


def _read_body(path: Path, dim: int):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration as exc:
                raise DataError(f"empty trajectory body {path}") from exc
            expected = ["t"] + [f"v{i + 1}" for i in range(dim)]
            if [c.strip() for c in header] != expected:
                raise DataError(f"{path}: unexpected columns {header}, expected {expected}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != dim + 1:
                    raise DataError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}")
                try:
                    rows.append([float(x) for x in row])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: non-numeric field") from exc
    except FileNotFoundError as exc:
        raise DataError(f"missing dataset file {path}") from exc
    if not rows:
        raise DataError(f"{path}: no samples")
    body = np.asarray(rows, dtype=float)
    return body[:, 0], body[:, 1:]


def load_dataset(directory) -> TrajectoryDataset:
    """Read a dataset directory written by :func:`save_dataset`."""
    directory = Path(directory)
    manifest = _read_json(directory / "manifest.json")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported dataset format version {version!r}")
    try:
        n_levels = int(manifest["n_levels"])
        entries = manifest["trajectories"]
        metadata = manifest.get("metadata", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed manifest in {directory}: {exc}") from exc
    records = []
    for entry in entries:
        try:
            header = _read_json(directory / entry["header"])
            body_name = entry["body"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed trajectory entry {entry!r}") from exc
        try:
            rec_levels = int(header["n_levels"])
            times, states = _read_body(directory / body_name, rec_levels * rec_levels - 1)
            amps = header.get("amps")
            records.append(
                TrajectoryRecord(
                    record_id=header["id"],
                    n_levels=rec_levels,
                    times=times,
                    states=states,
                    provenance=header["provenance"],
                    role=header.get("role", "train"),
                    amps=None if amps is None else np.asarray([float(a) for a in amps]),
                    meta=header.get("meta", {}),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed trajectory header {entry.get('header')!r}: {exc}") from exc
    return TrajectoryDataset(n_levels=n_levels, records=records, metadata=metadata)


def add_noise(dataset: TrajectoryDataset, sigma: float, seed: int) -> TrajectoryDataset:
    """Add iid Normal(0, sigma) noise to every Bloch component at every sample.

    Components are clamped to [-1, 1] afterwards, mimicking estimates obtained
    from finitely many single-shot measurements.  sigma = 0 returns an
    unnoised copy.
    """
    if not np.isfinite(sigma) or sigma < 0:
        raise ConfigError(f"noise level must be finite and nonnegative, got {sigma}")
    rng = np.random.default_rng(seed)
    records = []
    for rec in dataset.records:
        states = rec.states
        if sigma > 0:
            states = np.clip(states + rng.normal(0.0, sigma, size=states.shape), -1.0, 1.0)
        records.append(
            TrajectoryRecord(
                record_id=rec.record_id,
                n_levels=rec.n_levels,
                times=rec.times.copy(),
                states=states.copy(),
                provenance=rec.provenance,
                role=rec.role,
                amps=None if rec.amps is None else rec.amps.copy(),
                meta=copy.deepcopy(rec.meta),
            )
        )
    metadata = dict(dataset.metadata)
    metadata["noise_sigma"] = sigma
    metadata["noise_seed"] = seed
    return TrajectoryDataset(dataset.n_levels, records, metadata)


# Calibration tables are typically rounded to five or six digits, so row sums
# can miss 1 by a few 1e-6; accept that rather than reject real instruments.
_ROW_SUM_TOL = 1e-5


@dataclass(frozen=True)
class ConfusionMatrix:
    """Readout confusion matrix: rows index the prepared state, columns the label.

    With row-stochastic ``C``, classified populations relate to the true ones
    by ``p_raw = C^T p_true`` (so preparing state i yields row i of ``C`` as the
    label distribution).  The correction solves that linear system and projects
    the result back onto the probability simplex (clamp to [0, 1], renormalize
    to unit sum).
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 2:
            raise DataError(f"confusion matrix must be square K x K with K >= 2, got shape {mat.shape}")
        if np.any(mat < -1e-12):
            raise DataError("confusion matrix has negative entries")
        row_sums = mat.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > _ROW_SUM_TOL:
            raise DataError(f"confusion matrix rows must sum to 1, got sums {row_sums}")
        if np.linalg.cond(mat) > 1e12:
            raise DataError("confusion matrix is singular or numerically non-invertible")
        object.__setattr__(self, "matrix", mat)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, n_states: int) -> "ConfusionMatrix":
        return cls(np.eye(n_states))

    @classmethod
    def from_json(cls, path) -> "ConfusionMatrix":
        """Load from a JSON sidecar: either a bare matrix or {"confusion": matrix}."""
        doc = _read_json(Path(path))
        if isinstance(doc, dict):
            if "confusion" not in doc:
                raise DataError(f"{path}: no 'confusion' entry")
            doc = doc["confusion"]
        return cls(np.asarray(doc, dtype=float))

    def forward(self, populations: np.ndarray) -> np.ndarray:
        """Apply the confusion map to true populations (rows of shape (..., K))."""
        p = np.asarray(populations, dtype=float)
        return p @ self.matrix

    def correct(self, populations: np.ndarray, project: bool = True) -> np.ndarray:
        """Invert the confusion map on raw populations (rows of shape (..., K)).

        With ``project`` (the default) the result is clamped to [0, 1] and
        renormalized row-wise to sum 1; without it the raw solve is returned,
        which composed with :meth:`forward` is the exact identity.
        """
        p = np.asarray(populations, dtype=float)
        if p.shape[-1] != self.n_states:
            raise DataError(f"populations have {p.shape[-1]} states, confusion matrix has {self.n_states}")
        corrected = np.linalg.solve(self.matrix.T, p[..., None])[..., 0]
        if not project:
            return corrected
        corrected = np.clip(corrected, 0.0, 1.0)
        norms = corrected.sum(axis=-1, keepdims=True)
        if np.any(norms <= 0.0):
            raise DataError("corrected populations vanished; confusion matrix inconsistent with data")
        return corrected / norms


def populations_to_bloch(p_x0: np.ndarray, p_y0: np.ndarray, p_z0: np.ndarray) -> np.ndarray:
    """Two-level Bloch components from |0> populations of the three bases.

    The x (y) population is measured after a Ry(pi/2) (Rx(pi/2)) rotation that
    maps the corresponding equator axis onto z; each component is v = 2P(|0>)-1.
    """
    p_x0, p_y0, p_z0 = (np.asarray(p, dtype=float) for p in (p_x0, p_y0, p_z0))
    return np.stack([2.0 * p_x0 - 1.0, 2.0 * p_y0 - 1.0, 2.0 * p_z0 - 1.0], axis=-1)


# Accepted columns: "t" first, then P_<axis><state-index> in any order.
_COL_PATTERN = re.compile(r"^P_([xyz])(\d+)$")


def _parse_population_columns(header, n_states):
    if not header or header[0].strip() != "t":
        raise DataError(f"first column must be 't', got {header[:1]}")
    groups = {"x": {}, "y": {}, "z": {}}
    for idx, name in enumerate(header[1:], start=1):
        match = _COL_PATTERN.match(name.strip())
        if not match:
            raise DataError(f"unexpected column {name!r}; expected P_<axis><index> like P_x0")
        axis, state = match.group(1), int(match.group(2))
        if state in groups[axis]:
            raise DataError(f"duplicate column {name!r}")
        groups[axis][state] = idx
    for axis, cols in groups.items():
        if sorted(cols) == [0] and n_states == 2:
            continue  # |1> population implied as the complement
        if sorted(cols) != list(range(n_states)):
            raise DataError(
                f"axis {axis!r} provides populations for states {sorted(cols)}, "
                f"need 0..{n_states - 1} (or P_{axis}0 alone for two-state readout)"
            )
    return groups


def ingest_experimental(
    csv_path,
    confusion: ConfusionMatrix,
    record_id: str = "experimental-000",
    role: str = "train",
    amps: np.ndarray = None,
    meta: dict = None,
) -> TrajectoryRecord:
    """Build a two-level Bloch trajectory from classified measurement populations.

    ``csv_path`` holds one row per sample time with columns ``t`` and
    ``P_<axis><state>`` for the z, x and y measurement bases (``P_x0`` alone
    suffices for two-outcome readout).  Every row is corrected with the
    confusion matrix before the Bloch conversion.
    """
    path = Path(csv_path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration as exc:
                raise DataError(f"{path} is empty") from exc
            groups = _parse_population_columns(header, confusion.n_states)
            n_cols = len(header)
            times, raw = [], {"x": [], "y": [], "z": []}
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != n_cols:
                    raise DataError(f"{path}:{lineno}: expected {n_cols} fields, got {len(row)}")
                try:
                    vals = [float(x) for x in row]
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: non-numeric field") from exc
                times.append(vals[0])
                for axis, cols in groups.items():
                    if sorted(cols) == [0] and confusion.n_states == 2:
                        p0 = vals[cols[0]]
                        raw[axis].append([p0, 1.0 - p0])
                    else:
                        raw[axis].append([vals[cols[k]] for k in range(confusion.n_states)])
    except FileNotFoundError as exc:
        raise DataError(f"missing experimental input {path}") from exc
    if not times:
        raise DataError(f"{path}: no samples")
    corrected = {axis: confusion.correct(np.asarray(raw[axis])) for axis in raw}
    states = populations_to_bloch(corrected["x"][:, 0], corrected["y"][:, 0], corrected["z"][:, 0])
    return TrajectoryRecord(
        record_id=record_id,
        n_levels=2,
        times=np.asarray(times),
        states=states,
        provenance="experimental",
        role=role,
        amps=amps,
        meta=meta or {"source": path.name},
    )
