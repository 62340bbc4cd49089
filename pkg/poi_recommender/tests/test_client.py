import numpy as np
import pytest
import scipy.linalg

from poi_recommender.core.exceptions import DivergenceError, NumericalError
from poi_recommender.data.features import VisitCountRow
from poi_recommender.training.client import (
    PrivateProfile,
    als_update_user,
    als_update_users,
    build_clients,
    client_gradient_report,
    preference_matrix,
)
from poi_recommender.training.server import estimate_user_term, exact_user_term


def random_profile(rng, n, d, scale=1.0):
    counts = {int(j): int(rng.integers(1, 6)) for j in rng.choice(n, size=max(1, n // 2), replace=False)}
    return PrivateProfile(u=rng.uniform(0, scale, d), visit_row=VisitCountRow(counts), n=n)


class TestAls:
    def test_matches_least_squares_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n, d = 20, 5
            V = rng.normal(size=(n, d))
            lam = float(rng.uniform(1e-8, 1.0))
            profile = random_profile(rng, n, d)
            u = als_update_user(profile, V, lam)
            augmented = np.vstack([V, np.sqrt(lam) * np.eye(d)])
            target = np.concatenate([profile.normalized_row, np.zeros(d)])
            oracle, *_ = scipy.linalg.lstsq(augmented, target)
            np.testing.assert_allclose(u, oracle, atol=1e-6)

    def test_first_order_optimality(self):
        rng = np.random.default_rng(1)
        n, d, lam = 12, 4, 0.1
        V = rng.normal(size=(n, d))
        profile = random_profile(rng, n, d)
        u = als_update_user(profile, V, lam)

        def local(x):
            return np.sum((profile.normalized_row - V @ x) ** 2) + lam * np.sum(x**2)

        base = local(u)
        for _ in range(100):
            direction = rng.normal(size=d)
            direction /= np.linalg.norm(direction)
            assert local(u + 1e-3 * direction) >= base - 1e-9

    def test_empty_row_gives_zero(self):
        profile = PrivateProfile(u=np.ones(2), visit_row=VisitCountRow({}), n=3)
        u = als_update_user(profile, np.eye(3)[:, :2], 1e-8)
        np.testing.assert_array_equal(u, np.zeros(2))

    def test_identity_recovers_row(self):
        profile = PrivateProfile(u=np.zeros(3), visit_row=VisitCountRow({0: 2, 2: 1}), n=3)
        u = als_update_user(profile, np.eye(3), 1e-12)
        np.testing.assert_allclose(u, [1.0, 0.0, 0.5], atol=1e-9)

    def test_singular_system(self):
        profile = PrivateProfile(u=np.zeros(2), visit_row=VisitCountRow({0: 1}), n=3)
        with pytest.raises(NumericalError):
            als_update_user(profile, np.zeros((3, 2)), 0.0)

    def test_batched_matches_single(self, small_dataset):
        clients = build_clients(small_dataset, d=4, seed=0)
        R = preference_matrix(clients, small_dataset.n)
        V = np.random.default_rng(2).normal(size=(small_dataset.n, 4))
        U = np.vstack([c.profile.u for c in clients])
        batched = als_update_users(R, V, 1e-3, U)
        for client in clients:
            np.testing.assert_allclose(batched[client.index], als_update_user(client.profile, V, 1e-3), atol=1e-10)


class TestBuildClients:
    def test_split_and_rows(self, tiny_dataset):
        clients = build_clients(tiny_dataset, d=2, seed=0, allocated_epsilon=1.0)
        assert [c.held_out for c in clients] == [2, 2, 0]
        assert [c.current for c in clients] == [1, 0, 2]
        np.testing.assert_allclose(clients[1].profile.normalized_row, [0.5, 1.0, 0.0])
        assert all(c.ledger.allocated == 1.0 for c in clients)

    def test_deterministic(self, small_dataset):
        first = build_clients(small_dataset, d=3, seed=5)
        second = build_clients(small_dataset, d=3, seed=5)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.profile.u, b.profile.u)

    def test_non_private_has_no_ledger(self, tiny_dataset):
        assert all(c.ledger is None for c in build_clients(tiny_dataset, d=2, seed=0))

    def test_preference_matrix(self, tiny_dataset):
        clients = build_clients(tiny_dataset, d=2, seed=0)
        R = preference_matrix(clients, 3).toarray()
        np.testing.assert_allclose(R, [[1, 1, 0], [0.5, 1, 0], [0, 0, 1]])


class TestGradientReport:
    def test_shape_and_bound(self, rng):
        profile = random_profile(rng, 8, 3, scale=0.5)
        V = rng.uniform(0, 0.3, size=(8, 3))
        report = client_gradient_report(profile, V, 1.0, rng)
        assert 0 <= report.dim < 3
        assert report.contributions.shape == (8,)
        half = np.exp(0.5)
        C = (half + 1) / (half - 1)
        assert np.all(np.abs(report.contributions) <= 3 * C * abs(profile.u[report.dim]) + 1e-12)

    def test_divergence_guard(self, rng):
        profile = PrivateProfile(u=np.array([1e4, 0.0]), visit_row=VisitCountRow({0: 1}), n=3)
        with pytest.raises(DivergenceError):
            client_gradient_report(profile, np.ones((3, 2)), 1.0, rng)

    def test_huge_errors_are_clamped(self, rng):
        profile = PrivateProfile(u=np.array([1.0]), visit_row=VisitCountRow({0: 1}), n=2)
        report = client_gradient_report(profile, np.array([[-500.0], [500.0]]), 1.0, rng)
        assert np.all(np.isfinite(report.contributions))

    def test_dimension_sampling_unbiased(self):
        rng = np.random.default_rng(3)
        m, n, d = 20, 4, 3
        profiles = [random_profile(rng, n, d, scale=0.3) for _ in range(m)]
        V = rng.uniform(0, 0.3, size=(n, d))
        P = np.vstack([p.normalized_row for p in profiles])
        U = np.vstack([p.u for p in profiles])
        exact = exact_user_term(P, U, V)

        runs = 2000
        estimates = np.empty((runs, n, d))
        for r in range(runs):
            run_rng = np.random.default_rng([17, r])
            reports = [client_gradient_report(p, V, 1.0, run_rng) for p in profiles]
            estimates[r] = estimate_user_term(reports, n, d, population=m)
        standard_error = estimates.std(axis=0, ddof=1) / np.sqrt(runs)
        assert np.all(np.abs(estimates.mean(axis=0) - exact) <= 4 * standard_error)
