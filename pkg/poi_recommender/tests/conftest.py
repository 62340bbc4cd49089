import numpy as np
import pytest

from poi_recommender.data.checkins import CheckinDataset, CheckinHistory, PoiDomain
from poi_recommender.data.synthetic import generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dataset():
    """60 ring-walk users over 12 POIs, 8 check-ins each."""
    return generate_synthetic(m=60, n=12, length=8, seed=3)


@pytest.fixture
def tiny_dataset():
    histories = [
        CheckinHistory.from_checkins("a", [(0, 1.0), (1, 2.0), (2, 3.0)]),
        CheckinHistory.from_checkins("b", [(1, 1.0), (1, 2.0), (0, 3.0), (2, 4.0)]),
        CheckinHistory.from_checkins("c", [(2, 5.0), (0, 6.0)]),
    ]
    return CheckinDataset(domain=PoiDomain(n=3), histories=histories, name="tiny")


@pytest.fixture
def checkin_file(tmp_path):
    path = tmp_path / "checkins.csv"
    path.write_text(
        "user_id,timestamp,poi_id\n"
        "u1,10,p5\n"
        "u1,20,p7\n"
        "u2,5,p7\n"
        "u1,30,p5\n"
        "u2,15,p9\n"
        "u3,1,p5\n"
    )
    return path
