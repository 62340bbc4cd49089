import pytest

from poi_recommender.core.config import build_config
from poi_recommender.core.exceptions import InvalidParameterError
from poi_recommender.core.experiment import (
    ExperimentCell,
    ExperimentRunner,
    build_cells,
    load_dataset,
    run_experiment,
    train_config_for,
)
from poi_recommender.evaluation.reports import CSV_COLUMNS, read_report


def small_config(**sections):
    data = {
        "trainer": {"d": 3, "gamma": 0.1, "iterations": 3},
        "baselines": {"d": 3, "npb_epochs": 2, "pb_gamma": 0.1},
        "evaluation": {"ks": [1, 3], "seed_count": 2},
    }
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    return build_config(data)


class TestBuildCells:
    def test_base_cells(self):
        cells = build_cells(small_config())
        assert [c.method for c in cells] == ["spirel", "npb", "pb"]
        assert cells[0] == ExperimentCell("spirel", 1.0, 0.5, 3, True)
        assert cells[1] == ExperimentCell("npb", None, None, 2)
        assert cells[2] == ExperimentCell("pb", 1.0, None, 3)

    def test_epsilon_axis(self):
        cells = build_cells(small_config(sweep={"epsilons": [0.5, 1.0, 2.0, 3.0, 4.0]}), sweep=True)
        assert sum(c.method == "spirel" for c in cells) == 5
        assert sum(c.method == "pb" for c in cells) == 5
        assert sum(c.method == "npb" for c in cells) == 1

    def test_split_axis_only_touches_spirel(self):
        ratios = [r / 10 for r in range(1, 10)]
        cells = build_cells(small_config(sweep={"split_ratios": ratios}), sweep=True)
        assert [c.split_ratio for c in cells if c.method == "spirel"] == ratios
        assert sum(c.method == "pb" for c in cells) == 1

    def test_sweep_ignored_without_flag(self):
        assert len(build_cells(small_config(sweep={"epsilons": [0.5, 1.0]}))) == 3

    def test_non_private_collapses_budget_axes(self):
        config = small_config(sweep={"epsilons": [0.5, 1.0], "split_ratios": [0.2, 0.8]})
        cells = build_cells(config, sweep=True, private=False)
        assert len(cells) == 3
        assert all(not c.private for c in cells)
        assert build_cells(small_config(privacy={"enabled": False}))[0].epsilon is None

    def test_labels(self):
        assert ExperimentCell("spirel", 1.0, 0.3, 10, False).label() == "spirel eps=1 split=0.3 k=10 raw-q"
        assert ExperimentCell("npb", None, None, 20).label() == "npb non-private k=20"


class TestTrainConfigFor:
    def test_spirel(self):
        config = train_config_for(ExperimentCell("spirel", 2.0, 0.25, 5), small_config(), seed=3)
        assert config.budget.transition_epsilon == pytest.approx(0.5)
        assert (config.iterations, config.seed, config.d) == (5, 3, 3)

    def test_baselines(self):
        pb = train_config_for(ExperimentCell("pb", 2.0, None, 4), small_config(), seed=0)
        assert pb.budget.total_epsilon == 2.0
        assert not pb.use_adam
        npb = train_config_for(ExperimentCell("npb", None, None, 2), small_config(), seed=0)
        assert npb.budget is None
        assert npb.epochs == 2

    def test_unknown_method(self):
        with pytest.raises(InvalidParameterError):
            train_config_for(ExperimentCell("knn", None, None, 1), small_config(), seed=0)


class TestRunExperiment:
    def test_writes_rows_per_cell_and_k(self, tmp_path, small_dataset):
        path = tmp_path / "metrics.csv"
        reports = run_experiment(small_config(), csv_path=path, dataset=small_dataset)
        assert len(reports) == 3
        frame = read_report(path)
        assert list(frame.columns) == CSV_COLUMNS
        assert frame["method"].tolist() == ["spirel", "spirel", "npb", "npb", "pb", "pb"]
        assert frame["k"].tolist() == [1, 3] * 3
        assert set(frame["seed_count"]) == {2}
        assert frame["epsilon"].tolist()[2:4] == ["inf", "inf"]
        assert all(0.0 <= r <= 1.0 for r in frame["recall"])

    def test_reports_are_deterministic(self, tmp_path, small_dataset):
        run_experiment(small_config(), csv_path=tmp_path / "a.csv", dataset=small_dataset)
        run_experiment(small_config(), csv_path=tmp_path / "b.csv", dataset=small_dataset)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_parallel_matches_serial(self, tmp_path, small_dataset):
        config = small_config(evaluation={"methods": ["spirel", "npb"]})
        run_experiment(config, csv_path=tmp_path / "serial.csv", dataset=small_dataset)
        run_experiment(config, jobs=2, csv_path=tmp_path / "parallel.csv", dataset=small_dataset)
        assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()

    def test_bad_jobs(self):
        with pytest.raises(InvalidParameterError):
            ExperimentRunner(small_config(), jobs=0)


class TestLoadDataset:
    def test_from_file_with_truncation(self, checkin_file):
        config = build_config({"dataset": {"path": str(checkin_file), "max_length": 2}})
        dataset = load_dataset(config.dataset)
        assert dataset.name == "checkins"
        assert all(len(h) <= 2 for h in dataset)

    def test_from_manifest(self, tmp_path):
        manifest = tmp_path / "pop.toml"
        manifest.write_text("m = 12\nn = 5\nlength = 4\nseed = 2\n")
        dataset = load_dataset(build_config({"dataset": {"manifest": str(manifest)}}).dataset)
        assert (dataset.m, dataset.n, dataset.name) == (12, 5, "pop")
