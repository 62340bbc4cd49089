import pytest
from typer.testing import CliRunner

from poi_recommender.cli import app
from poi_recommender.data.checkins import load_checkins
from poi_recommender.evaluation.reports import read_report

runner = CliRunner()


@pytest.fixture
def workspace(tmp_path):
    data = tmp_path / "ring.csv"
    result = runner.invoke(app, ["generate", "--m", "30", "--n", "6", "--len", "5", "--seed", "1", "-o", str(data)])
    assert result.exit_code == 0, result.output
    out = tmp_path / "results"
    config = tmp_path / "run.toml"
    config.write_text(
        f"[dataset]\npath = '{data.as_posix()}'\n"
        "[trainer]\nd = 3\ngamma = 0.1\niterations = 3\n"
        "[baselines]\nd = 3\nnpb_epochs = 2\npb_gamma = 0.1\n"
        "[evaluation]\nks = [1, 3]\nseed_count = 1\n"
        f"[output]\ndirectory = '{out.as_posix()}'\n"
    )
    return data, config, out


def test_generate(workspace):
    data, _, _ = workspace
    dataset = load_checkins(data)
    assert (dataset.m, dataset.n) == (30, 6)
    assert all(len(h) == 5 for h in dataset)


def test_generate_needs_all_shape_options(tmp_path):
    result = runner.invoke(app, ["generate", "--m", "30", "-o", str(tmp_path / "x.csv")])
    assert result.exit_code == 1


def test_train_non_private_with_trace(workspace):
    _, config, out = workspace
    result = runner.invoke(app, ["train", "-c", str(config), "--no-privacy", "--trace"])
    assert result.exit_code == 0, result.output
    assert len(list(out.glob("spirel_*.model"))) == 1
    assert len(list(out.glob("spirel_*.json"))) == 1
    assert len(list(out.glob("spirel_*.transitions"))) == 1
    traces = list(out.glob("spirel_*_trace.csv"))
    assert len(traces) == 1
    assert len(traces[0].read_text().strip().splitlines()) == 1 + 4


def test_train_private_baseline_and_inspect(workspace):
    _, config, out = workspace
    result = runner.invoke(app, ["train", "-c", str(config), "--method", "pb"])
    assert result.exit_code == 0, result.output
    checkpoint = next(out.glob("pb_*.model"))
    assert not list(out.glob("pb_*.transitions"))

    result = runner.invoke(app, ["inspect", str(checkpoint), "--top", "3"])
    assert result.exit_code == 0, result.output


def test_train_unknown_method(workspace):
    _, config, _ = workspace
    assert runner.invoke(app, ["train", "-c", str(config), "--method", "knn"]).exit_code == 1


def test_evaluate_writes_metrics(workspace):
    _, config, out = workspace
    result = runner.invoke(app, ["evaluate", "-c", str(config), "--seed", "4"])
    assert result.exit_code == 0, result.output
    frame = read_report(out / "metrics.csv")
    assert frame["method"].tolist() == ["spirel", "spirel", "npb", "npb", "pb", "pb"]


def test_bad_config_exits_with_one(tmp_path):
    config = tmp_path / "bad.toml"
    config.write_text("[privacy]\nepsilon = -1\n")
    for command in ("train", "evaluate", "sweep"):
        assert runner.invoke(app, [command, "-c", str(config)]).exit_code == 1


def test_inspect_missing_checkpoint(tmp_path):
    assert runner.invoke(app, ["inspect", str(tmp_path / "none.model")]).exit_code == 1


def test_sweep_is_reproducible(workspace, tmp_path):
    _, config, _ = workspace
    config.write_text(config.read_text() + "[sweep]\nepsilons = [0.5, 2.0]\n")
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        result = runner.invoke(app, ["sweep", "-c", str(config), "-o", str(out), "--seed", "3"])
        assert result.exit_code == 0, result.output
        outputs.append((out / "sweep.csv").read_bytes())

    frame = read_report(tmp_path / "first" / "sweep.csv")
    assert sorted(set(frame["method"])) == ["npb", "pb", "spirel"]
    assert sorted(set(frame.loc[frame["method"] == "spirel", "epsilon"])) == ["0.5", "2"]
    assert outputs[0] == outputs[1]


@pytest.mark.parametrize("command", ["train", "evaluate", "sweep"])
def test_undecodable_dataset_is_reported(tmp_path, command):
    data = tmp_path / "latin1.csv"
    data.write_bytes(b"u,1,caf\xe9\nu,2,bar\n")
    config = tmp_path / "latin1.toml"
    config.write_text(f"[dataset]\npath = '{data.as_posix()}'\n")
    result = runner.invoke(app, [command, "-c", str(config), "-o", str(tmp_path / "out")])
    assert result.exit_code == 1
    assert isinstance(result.exception, SystemExit)
    assert "Error:" in result.output


def test_inspect_reports_unreadable_checkpoint(tmp_path):
    checkpoint = tmp_path / "broken.model"
    checkpoint.write_bytes(b"\x00\x01")
    result = runner.invoke(app, ["inspect", str(checkpoint)])
    assert result.exit_code == 1
    assert isinstance(result.exception, SystemExit)
