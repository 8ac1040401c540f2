"""Dataset schema, disk round trips, noise injection, and measurement correction."""

import json

import numpy as np
import numpy.testing as npt
import pytest

from thermoq.datasets import (
    ConfusionMatrix,
    TrajectoryDataset,
    TrajectoryRecord,
    add_noise,
    ingest_experimental,
    load_dataset,
    populations_to_bloch,
    save_dataset,
)
from thermoq.errors import ConfigError, DataError


def make_record(record_id="0000", n_levels=2, n_times=11, seed=0, **kwargs):
    rng = np.random.default_rng(seed)
    d = n_levels * n_levels - 1
    times = np.linspace(0.0, 1.0, n_times)
    states = rng.uniform(-0.5, 0.5, size=(n_times, d))
    defaults = dict(provenance="synthetic-nonlinear", role="train")
    defaults.update(kwargs)
    return TrajectoryRecord(record_id, n_levels, times, states, **defaults)


def make_dataset(n_records=5, n_levels=2, seed=0, metadata=None):
    records = [
        make_record(f"{k:04d}", n_levels=n_levels, seed=seed + k, role="train" if k < 2 else "test")
        for k in range(n_records)
    ]
    return TrajectoryDataset(n_levels, records, metadata or {"origin": "test"})


class TestRecordValidation:
    def test_accepts_well_formed(self):
        rec = make_record(amps=np.array([1.0, 2.0, 3.0, 4.0]), meta={"note": "x"})
        assert rec.dim == 3
        assert rec.n_times == 11

    def test_rejects_non_increasing_times(self):
        t = np.array([0.0, 0.1, 0.1, 0.3])
        with pytest.raises(DataError, match="strictly increasing"):
            TrajectoryRecord("r", 2, t, np.zeros((4, 3)), "synthetic-nonlinear")

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DataError, match="does not match"):
            TrajectoryRecord("r", 2, np.linspace(0, 1, 5), np.zeros((4, 3)), "synthetic-nonlinear")
        with pytest.raises(DataError, match="does not match"):
            TrajectoryRecord("r", 2, np.linspace(0, 1, 4), np.zeros((4, 8)), "synthetic-nonlinear")

    def test_rejects_unknown_tags(self):
        with pytest.raises(DataError, match="provenance"):
            make_record(provenance="made-up")
        with pytest.raises(DataError, match="role"):
            make_record(role="validation")

    def test_rejects_path_like_id(self):
        with pytest.raises(DataError, match="stem"):
            make_record(record_id="../evil")

    def test_rejects_bad_amps(self):
        with pytest.raises(DataError, match="4-vector"):
            make_record(amps=np.array([1.0, 2.0]))

    def test_rejects_non_finite(self):
        states = np.zeros((4, 3))
        states[2, 1] = np.nan
        with pytest.raises(DataError, match="non-finite"):
            TrajectoryRecord("r", 2, np.linspace(0, 1, 4), states, "synthetic-nonlinear")


class TestDatasetContainer:
    def test_rejects_mixed_levels(self):
        recs = [make_record("a", n_levels=2), make_record("b", n_levels=3)]
        with pytest.raises(DataError, match="n_levels"):
            TrajectoryDataset(2, recs)

    def test_rejects_duplicate_ids(self):
        with pytest.raises(DataError, match="duplicate"):
            TrajectoryDataset(2, [make_record("a"), make_record("a", seed=1)])

    def test_select_by_role_and_provenance(self):
        ds = make_dataset(n_records=6)
        assert [r.record_id for r in ds.select(role="train")] == ["0000", "0001"]
        assert len(ds.select(role="test")) == 4
        assert ds.select(provenance="experimental") == []
        sub = ds.subset(role="test")
        assert len(sub) == 4 and sub.n_levels == 2

    def test_training_data_bridges_records(self):
        ds = make_dataset(n_records=4)
        batch = ds.training_data(role="train")
        assert batch.states.shape == (2, 11, 3)
        npt.assert_array_equal(batch.times, ds.records[0].times)
        npt.assert_array_equal(batch.states[1], ds.records[1].states)
        npt.assert_array_equal(batch.amps, np.zeros((2, 4)))

    def test_training_data_truncates_at_t_max(self):
        ds = make_dataset()
        batch = ds.training_data(role="train", t_max=0.5)
        # grid is linspace(0, 1, 11): six samples fall at or below 0.5
        assert batch.times.shape == (6,)
        assert batch.times[-1] == pytest.approx(0.5)

    def test_training_data_carries_amps(self):
        amps = np.array([0.1, 0.2, 0.3, 0.4])
        rec = make_record(amps=amps)
        ds = TrajectoryDataset(2, [rec])
        npt.assert_array_equal(ds.training_data().amps, amps[None, :])

    def test_training_data_requires_shared_grid(self):
        a = make_record("a")
        b = make_record("b", n_times=7)
        with pytest.raises(DataError, match="shared time grid"):
            TrajectoryDataset(2, [a, b]).training_data()

    def test_training_data_requires_records(self):
        with pytest.raises(DataError, match="no records"):
            TrajectoryDataset(2, []).training_data()


class TestDiskRoundTrip:
    @pytest.mark.parametrize("n_levels", [2, 3])
    def test_numeric_payload_bit_identical(self, tmp_path, n_levels):
        rng = np.random.default_rng(42)
        records = []
        for k in range(3):
            times = np.sort(rng.uniform(0, 10, size=17))
            while np.any(np.diff(times) <= 0):  # pragma: no cover - vanishing probability
                times = np.sort(rng.uniform(0, 10, size=17))
            d = n_levels * n_levels - 1
            records.append(
                TrajectoryRecord(
                    f"{k:04d}",
                    n_levels,
                    times,
                    rng.normal(size=(17, d)) / 3.0,
                    "synthetic-nonlinear",
                    role="test",
                    amps=rng.normal(size=4) if k == 0 else None,
                    meta={"k": k},
                )
            )
        ds = TrajectoryDataset(n_levels, records, {"seed": 42})
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert back.n_levels == ds.n_levels
        assert back.metadata == ds.metadata
        assert len(back) == len(ds)
        for orig, loaded in zip(ds.records, back.records):
            assert loaded.record_id == orig.record_id
            assert loaded.provenance == orig.provenance
            assert loaded.role == orig.role
            assert loaded.meta == orig.meta
            npt.assert_array_equal(loaded.times, orig.times)
            npt.assert_array_equal(loaded.states, orig.states)
            if orig.amps is None:
                assert loaded.amps is None
            else:
                npt.assert_array_equal(loaded.amps, orig.amps)

    def test_rewrite_is_byte_identical(self, tmp_path):
        ds = make_dataset(n_records=2)
        save_dataset(ds, tmp_path / "a")
        save_dataset(load_dataset(tmp_path / "a"), tmp_path / "b")
        for name in ["manifest.json", "0000.json", "0000.csv", "0001.csv"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_csv_is_plain_delimited_text(self, tmp_path):
        ds = make_dataset(n_records=1)
        save_dataset(ds, tmp_path / "ds")
        lines = (tmp_path / "ds" / "0000.csv").read_text().splitlines()
        assert lines[0] == "t,v1,v2,v3"
        assert len(lines) == 1 + 11

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError, match="missing dataset file"):
            load_dataset(tmp_path / "nope")

    def test_unsupported_version(self, tmp_path):
        d = tmp_path / "ds"
        d.mkdir()
        (d / "manifest.json").write_text(json.dumps({"format_version": 99}))
        with pytest.raises(DataError, match="format version"):
            load_dataset(d)

    def test_malformed_manifest_json(self, tmp_path):
        d = tmp_path / "ds"
        d.mkdir()
        (d / "manifest.json").write_text("{not json")
        with pytest.raises(DataError, match="malformed JSON"):
            load_dataset(d)

    def test_truncated_body_row(self, tmp_path):
        ds = make_dataset(n_records=1)
        path = save_dataset(ds, tmp_path / "ds")
        body = path / "0000.csv"
        lines = body.read_text().splitlines()
        lines[3] = "0.3,0.1"  # drop two fields
        body.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="expected 4 fields"):
            load_dataset(path)

    def test_non_numeric_body_field(self, tmp_path):
        ds = make_dataset(n_records=1)
        path = save_dataset(ds, tmp_path / "ds")
        body = path / "0000.csv"
        body.write_text(body.read_text().replace(str(ds.records[0].times[2]), "oops", 1))
        with pytest.raises(DataError, match="non-numeric"):
            load_dataset(path)

    def test_missing_trajectory_header(self, tmp_path):
        ds = make_dataset(n_records=1)
        path = save_dataset(ds, tmp_path / "ds")
        (path / "0000.json").unlink()
        with pytest.raises(DataError, match="missing dataset file"):
            load_dataset(path)

    def test_wrong_body_columns(self, tmp_path):
        ds = make_dataset(n_records=1)
        path = save_dataset(ds, tmp_path / "ds")
        body = path / "0000.csv"
        body.write_text(body.read_text().replace("t,v1,v2,v3", "time,a,b,c"))
        with pytest.raises(DataError, match="unexpected columns"):
            load_dataset(path)


class TestAddNoise:
    def test_zero_sigma_is_identity(self):
        ds = make_dataset()
        noisy = add_noise(ds, 0.0, seed=1)
        for orig, out in zip(ds.records, noisy.records):
            npt.assert_array_equal(out.states, orig.states)
            npt.assert_array_equal(out.times, orig.times)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ConfigError, match="nonnegative"):
            add_noise(make_dataset(), -0.1, seed=1)

    def test_empirical_std_matches_sigma(self):
        # one record with >= 1e4 samples keeps the sample std within 5 %
        rng = np.random.default_rng(3)
        times = np.arange(4000) * 0.1
        states = rng.uniform(-0.3, 0.3, size=(4000, 3))
        ds = TrajectoryDataset(2, [TrajectoryRecord("big", 2, times, states, "synthetic-nonlinear")])
        noisy = add_noise(ds, 0.1, seed=7)
        delta = noisy.records[0].states - states
        assert abs(delta.std() - 0.1) < 0.005
        assert abs(delta.mean()) < 0.005

    def test_clamps_to_unit_interval(self):
        times = np.arange(500) * 0.1
        states = np.ones((500, 3)) * 0.999
        ds = TrajectoryDataset(2, [TrajectoryRecord("edge", 2, times, states, "synthetic-nonlinear")])
        noisy = add_noise(ds, 0.5, seed=11)
        out = noisy.records[0].states
        assert np.max(out) <= 1.0 and np.min(out) >= -1.0
        assert np.any(out == 1.0)  # sigma = 0.5 at 0.999 saturates often

    def test_seed_determinism(self):
        ds = make_dataset()
        a = add_noise(ds, 0.1, seed=5)
        b = add_noise(ds, 0.1, seed=5)
        c = add_noise(ds, 0.1, seed=6)
        for ra, rb in zip(a.records, b.records):
            npt.assert_array_equal(ra.states, rb.states)
        assert not np.array_equal(a.records[0].states, c.records[0].states)

    def test_metadata_notes_noise(self):
        noisy = add_noise(make_dataset(), 0.1, seed=5)
        assert noisy.metadata["noise_sigma"] == 0.1
        assert noisy.metadata["noise_seed"] == 5


def near_identity_confusion(k, strength, seed):
    rng = np.random.default_rng(seed)
    mat = np.eye(k) + rng.uniform(0, strength, size=(k, k))
    return ConfusionMatrix(mat / mat.sum(axis=1, keepdims=True))


def random_simplex_rows(n, k, rng):
    p = rng.uniform(0.05, 1.0, size=(n, k))
    return p / p.sum(axis=1, keepdims=True)


class TestConfusionMatrix:
    def test_rejects_negative_entries(self):
        with pytest.raises(DataError, match="negative"):
            ConfusionMatrix(np.array([[1.1, -0.1], [0.0, 1.0]]))

    def test_rejects_bad_row_sums(self):
        with pytest.raises(DataError, match="sum to 1"):
            ConfusionMatrix(np.array([[0.7, 0.2], [0.1, 0.9]]))

    def test_accepts_rounded_row_sums(self):
        # calibration tables rounded to ~5 digits can miss 1 by a few 1e-6
        ConfusionMatrix(np.array([[0.999999, 0.000004], [0.05, 0.95]]))

    def test_rejects_singular(self):
        with pytest.raises(DataError, match="singular"):
            ConfusionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]))

    def test_rejects_non_square(self):
        with pytest.raises(DataError, match="square"):
            ConfusionMatrix(np.ones((2, 3)) / 3.0)

    @pytest.mark.parametrize("k", [2, 3])
    def test_correct_inverts_forward_exactly(self, k):
        rng = np.random.default_rng(2)
        conf = near_identity_confusion(k, 0.08, seed=k)
        p_true = random_simplex_rows(40, k, rng)
        raw = conf.forward(p_true)
        back = conf.correct(raw, project=False)
        assert np.max(np.abs(back - p_true)) < 1e-10

    def test_forward_preserves_simplex(self):
        rng = np.random.default_rng(4)
        conf = near_identity_confusion(3, 0.1, seed=1)
        p = random_simplex_rows(20, 3, rng)
        raw = conf.forward(p)
        npt.assert_allclose(raw.sum(axis=1), 1.0, atol=1e-12)
        assert np.min(raw) >= 0.0

    def test_projection_lands_on_simplex(self):
        conf = near_identity_confusion(3, 0.08, seed=2)
        # slightly corrupted raw rows push the solve out of [0, 1]
        raw = np.array([[1.02, -0.01, -0.01], [0.0, 0.0, 1.0], [0.2, 0.5, 0.3]])
        corrected = conf.correct(raw)
        npt.assert_allclose(corrected.sum(axis=1), 1.0, atol=1e-12)
        assert np.min(corrected) >= 0.0 and np.max(corrected) <= 1.0

    def test_identity_confusion_is_noop(self):
        conf = ConfusionMatrix.identity(3)
        rng = np.random.default_rng(5)
        p = random_simplex_rows(10, 3, rng)
        npt.assert_allclose(conf.correct(p), p, atol=1e-15)

    def test_dimension_mismatch(self):
        conf = ConfusionMatrix.identity(3)
        with pytest.raises(DataError, match="states"):
            conf.correct(np.ones((4, 2)) / 2.0)

    def test_from_json(self, tmp_path):
        mat = near_identity_confusion(3, 0.05, seed=3).matrix
        path = tmp_path / "confusion.json"
        path.write_text(json.dumps({"confusion": mat.tolist()}))
        npt.assert_array_equal(ConfusionMatrix.from_json(path).matrix, mat)
        bare = tmp_path / "bare.json"
        bare.write_text(json.dumps(mat.tolist()))
        npt.assert_array_equal(ConfusionMatrix.from_json(bare).matrix, mat)
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps({"other": 1}))
        with pytest.raises(DataError, match="confusion"):
            ConfusionMatrix.from_json(empty)


class TestBlochConversion:
    def test_full_z_population_gives_north_pole(self):
        v = populations_to_bloch(0.5, 0.5, 1.0)
        npt.assert_allclose(v, [0.0, 0.0, 1.0], atol=1e-15)

    def test_linear_in_populations(self):
        rng = np.random.default_rng(6)
        p = rng.uniform(0, 1, size=(9, 3))
        v = populations_to_bloch(p[:, 0], p[:, 1], p[:, 2])
        npt.assert_allclose(v, 2.0 * p - 1.0, atol=1e-15)


def write_population_csv(path, times, v, confusion=None, three_state=False, leak=0.0):
    """Serialize a Bloch trajectory as classified populations, optionally confused."""
    p0 = 0.5 * (1.0 + v)  # columns: x, y, z |0>-populations
    rows = []
    for k, t in enumerate(times):
        fields = [f"{t:.17g}"]
        for axis in range(3):
            if three_state:
                pops = np.array([p0[k, axis] * (1 - leak), (1 - p0[k, axis]) * (1 - leak), leak])
            else:
                pops = np.array([p0[k, axis], 1.0 - p0[k, axis]])
            if confusion is not None:
                pops = confusion.forward(pops)
            fields.extend(f"{x:.17g}" for x in (pops if three_state else pops[:1]))
        rows.append(",".join(fields))
    header = ["t"]
    for axis in "xyz":
        header.extend([f"P_{axis}{i}" for i in range(3)] if three_state else [f"P_{axis}0"])
    path.write_text(",".join(header) + "\n" + "\n".join(rows) + "\n")


class TestIngestExperimental:
    def setup_method(self):
        rng = np.random.default_rng(8)
        self.times = np.linspace(0.0, 3.0, 20)
        raw = rng.uniform(-0.6, 0.6, size=(20, 3))
        self.v = raw / np.maximum(1.0, np.linalg.norm(raw, axis=1, keepdims=True))

    def test_identity_confusion_matches_raw_conversion(self, tmp_path):
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v)
        rec = ingest_experimental(path, ConfusionMatrix.identity(2))
        assert rec.provenance == "experimental"
        assert rec.n_levels == 2
        npt.assert_array_equal(rec.times, self.times)
        npt.assert_allclose(rec.states, self.v, atol=1e-12)

    def test_correction_undoes_two_state_confusion(self, tmp_path):
        conf = near_identity_confusion(2, 0.1, seed=9)
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v, confusion=conf)
        rec = ingest_experimental(path, conf)
        npt.assert_allclose(rec.states, self.v, atol=1e-9)

    def test_correction_undoes_three_state_confusion(self, tmp_path):
        conf = near_identity_confusion(3, 0.06, seed=10)
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v, confusion=conf, three_state=True)
        rec = ingest_experimental(path, conf)
        npt.assert_allclose(rec.states, self.v, atol=1e-9)

    def test_leakage_renormalized_before_conversion(self, tmp_path):
        # a constant third-level leak shrinks |0>/|1> mass; projection restores it
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v, three_state=True, leak=0.0)
        rec = ingest_experimental(path, ConfusionMatrix.identity(3))
        npt.assert_allclose(rec.states, self.v, atol=1e-12)

    def test_missing_axis_column(self, tmp_path):
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v)
        text = path.read_text().replace("P_y0", "P_w0")
        path.write_text(text)
        with pytest.raises(DataError, match="unexpected column"):
            ingest_experimental(path, ConfusionMatrix.identity(2))

    def test_partial_three_state_columns(self, tmp_path):
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v)  # only P_*0 columns
        with pytest.raises(DataError, match="need 0..2"):
            ingest_experimental(path, ConfusionMatrix.identity(3))

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v)
        lines = path.read_text().splitlines()
        lines[4] = lines[4] + ",0.3"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="expected 4 fields"):
            ingest_experimental(path, ConfusionMatrix.identity(2))

    def test_non_numeric_row(self, tmp_path):
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v)
        lines = path.read_text().splitlines()
        parts = lines[6].split(",")
        parts[2] = "NA"
        lines[6] = ",".join(parts)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="non-numeric"):
            ingest_experimental(path, ConfusionMatrix.identity(2))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="missing experimental input"):
            ingest_experimental(tmp_path / "nope.csv", ConfusionMatrix.identity(2))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            ingest_experimental(path, ConfusionMatrix.identity(2))

    def test_record_into_dataset_round_trip(self, tmp_path):
        path = tmp_path / "exp.csv"
        write_population_csv(path, self.times, self.v)
        rec = ingest_experimental(path, ConfusionMatrix.identity(2), record_id="run-7", amps=np.zeros(4))
        ds = TrajectoryDataset(2, [rec], {"source": "bench"})
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        npt.assert_array_equal(back.records[0].states, rec.states)
        assert back.records[0].provenance == "experimental"
