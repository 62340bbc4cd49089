import json

import numpy as np
import pytest

from poi_recommender.core.exceptions import InvalidParameterError, ParseError
from poi_recommender.privacy.budget import split_budget
from poi_recommender.training.model import (
    DIAGNOSTIC_GAMMA,
    AdamState,
    LatentModel,
    TrainConfig,
    init_model,
    init_profile,
    load_model,
    save_model,
)


class TestInit:
    def test_range_and_shape(self):
        model = init_model(50, 4, seed=0)
        assert model.V.shape == (50, 4)
        assert np.all(model.V >= 0) and np.all(model.V <= 0.5)
        assert model.adam_state.step == 0
        assert not model.adam_state.m.any()

    def test_profile_range(self):
        u = init_profile(9, seed=1)
        assert u.shape == (9,)
        assert np.all((u >= 0) & (u <= 1 / 3))

    def test_seeded(self):
        np.testing.assert_array_equal(init_model(5, 2, seed=3).V, init_model(5, 2, seed=3).V)

    def test_bad_shape(self):
        with pytest.raises(InvalidParameterError):
            init_model(0, 2, seed=0)
        with pytest.raises(InvalidParameterError):
            init_profile(0, seed=0)


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert (config.d, config.gamma, config.iterations, config.regularization) == (10, 0.1, 10, 1e-8)
        assert config.sigmoid_scale is None
        assert not config.private

    def test_private(self):
        assert TrainConfig(budget=split_budget(2.0, 0.5)).private

    @pytest.mark.parametrize(
        "overrides",
        [{"d": 0}, {"iterations": 0}, {"regularization": -1.0}, {"gamma": 0.0}, {"epochs": 0}, {"sigmoid_scale": 0.0}],
    )
    def test_rejects(self, overrides):
        with pytest.raises(InvalidParameterError):
            TrainConfig(**overrides)

    def test_noiseless_settings(self):
        config = TrainConfig.noiseless(iterations=15)
        assert config.gamma == DIAGNOSTIC_GAMMA
        assert config.track_trace and not config.private
        assert config.iterations == 15


class TestCheckpoints:
    def test_save_and_load(self, tmp_path, rng):
        model = LatentModel(
            V=rng.normal(size=(6, 3)),
            adam_state=AdamState(m=rng.normal(size=(6, 3)), v=rng.uniform(size=(6, 3)), step=7),
        )
        path = save_model(model, tmp_path / "run" / "spirel.model", metadata={"method": "spirel", "epsilon": 1.0})
        assert path.stat().st_size == 24 + 3 * 8 * 18

        loaded, metadata = load_model(path)
        np.testing.assert_array_equal(loaded.V, model.V)
        np.testing.assert_array_equal(loaded.adam_state.v, model.adam_state.v)
        assert loaded.adam_state.step == 7
        assert metadata == {"method": "spirel", "epsilon": 1.0}
        assert json.loads(path.with_suffix(".json").read_text())["method"] == "spirel"

    def test_no_sidecar(self, tmp_path):
        path = save_model(init_model(2, 2, seed=0), tmp_path / "bare.model")
        assert load_model(path)[1] == {}

    def test_truncated(self, tmp_path):
        path = save_model(init_model(4, 2, seed=0), tmp_path / "cut.model")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ParseError):
            load_model(path)
        path.write_bytes(b"\x01")
        with pytest.raises(ParseError):
            load_model(path)
