import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adalloc import design as D
from adalloc import presets
from adalloc.plant import LinearPlant
from adalloc.projection import ProjectionBounds

from conftest import PRINTED_M, printed_boxes


def box_vertices(bounds):
    lo, hi = bounds.theta_min, bounds.theta_max
    for corner in itertools.product((0, 1), repeat=lo.size):
        yield np.where(np.reshape(corner, lo.shape), hi, lo)


def line_search_distance(B, M, eps, samples, theta0, directions, tol=1e-8):
    """Independent route to R: bisection along each direction for each (Lambda, i)."""
    c = M ** 2 / np.max(M) ** 2 - eps
    best = np.inf
    for lam in samples:
        for d in directions:
            def worst(t):
                return np.max(D.necessary_condition_rows(B, lam, theta0 + t * d) - c)
            hi = 1e-3
            while worst(hi) < 0:
                hi *= 2
            lo = 0.0
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if worst(mid) < 0 else (lo, mid)
            best = min(best, hi)
    return best


def random_directions(shape, count, seed=0):
    rng = np.random.default_rng(seed)
    dirs = []
    for k in range(int(np.prod(shape))):
        for s in (1.0, -1.0):
            d = np.zeros(int(np.prod(shape)))
            d[k] = s
            dirs.append(d.reshape(shape))
    for _ in range(count):
        d = rng.standard_normal(shape)
        dirs.append(d / np.linalg.norm(d))
    return dirs


class TestVirtualBounds:
    def test_identity(self):
        np.testing.assert_allclose(D.virtual_bounds(np.eye(2), [1, 2]), [1, 2])

    def test_row(self):
        np.testing.assert_allclose(D.virtual_bounds(np.array([[1.0, 1.0]]), [1, 1]), [2.0])

    def test_admire_contains_printed_values(self, admire_plant):
        M = D.virtual_bounds(admire_plant, presets.admire_actuators().u_max)
        assert np.all(M >= PRINTED_M)

    def test_zero_limits_rejected(self):
        with pytest.raises(D.DesignError) as exc:
            D.virtual_bounds(np.eye(2), [0.0, 0.0])
        assert exc.value.step == 1

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_in_limits(self, seed):
        rng = np.random.default_rng(seed)
        B = presets.admire_plant().B
        u = rng.uniform(0.1, 1.0, 4)
        grow = u + rng.uniform(0, 0.5, 4)
        assert np.all(D.virtual_bounds(B, grow) >= D.virtual_bounds(B, u) - 1e-12)


class TestOmegaTheta:
    def test_zero(self):
        assert D.omega_theta_contains(np.zeros((3, 4)), np.ones(3), np.ones(4))

    def test_ideal_admire(self, admire_design):
        plant, act, _, rep = admire_design
        assert D.omega_theta_contains(rep.theta_I_star, rep.M, act.u_max)
        # the printed virtual bounds also leave the ideal allocator unsaturated
        assert D.omega_theta_contains(rep.theta_I_star, PRINTED_M, act.u_max)

    def test_scaled_up(self, admire_design):
        plant, act, _, rep = admire_design
        assert not D.omega_theta_contains(1e3 * rep.theta_I_star, rep.M, act.u_max)

    def test_vertex_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            th = rng.standard_normal((2, 3))
            M = rng.uniform(0.1, 1, 2)
            u = rng.uniform(0.1, 2, 3)
            worst = np.abs(th.T) @ M  # |sum_i th_ij v_i| is maximised at v_i = sign(th_ij) M_i
            assert D.omega_theta_contains(th, M, u) == bool(np.all(worst <= u + 1e-12))


class TestGamma:
    def test_identity_hand_value(self):
        g, gB, gM = D.gamma_threshold(np.eye(2), [1.0, 1.0], 0.01)
        np.testing.assert_allclose(gB, [1, 1])
        np.testing.assert_allclose(gM, [0.99, 0.99])
        assert g == pytest.approx(1 - np.sqrt(0.99))
        assert g == pytest.approx(0.005013, abs=1e-6)

    def test_limit(self):
        assert D.gamma_threshold(np.eye(3), np.ones(3), 1e-12)[0] == pytest.approx(0, abs=1e-11)

    def test_admire_printed_M(self, admire_plant):
        g, _, _ = D.gamma_threshold(admire_plant.B, PRINTED_M, 1e-3)
        assert 0 < g < 1

    def test_rejects_large_epsilon(self):
        with pytest.raises(D.DesignError) as exc:
            D.gamma_threshold(np.eye(2), [1.0, 0.1], 0.05)
        assert exc.value.step == 3


class TestLambdaSamples:
    def test_vertices_only(self):
        s = D.sample_lambda_set(0.3, 2, 0)
        assert len(s) == 4
        assert any(np.all(x == 1) for x in s)

    def test_range(self):
        s = D.sample_lambda_set(0.5, 4, 100, seed=3)
        assert len(s) == 116
        assert all(np.all((x > 0.5) & (x <= 1)) for x in s)

    def test_deterministic(self):
        a = D.sample_lambda_set(0.5, 3, 10, seed=1)
        b = D.sample_lambda_set(0.5, 3, 10, seed=1)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_rejects_gamma(self):
        with pytest.raises(D.DesignError):
            D.sample_lambda_set(1.0, 2, 0)


class TestBoundaryDistance:
    def test_identity_symmetric(self):
        eps = 0.1
        R, _ = D.boundary_distance(np.eye(2), np.ones(2), eps, [np.ones(2)], np.eye(2))
        assert R == pytest.approx(np.sqrt(1 - eps))

    def test_line_search_agrees_identity(self):
        eps = 0.1
        th = np.eye(2)
        dirs = random_directions((2, 2), 200)
        ls = line_search_distance(np.eye(2), np.ones(2), eps, [np.ones(2)], th, dirs)
        assert ls == pytest.approx(np.sqrt(1 - eps), abs=1e-7)

    def test_line_search_never_below_exact_admire(self, admire_design):
        plant, act, _, rep = admire_design
        samples = D.sample_lambda_set(rep.gamma, 4, 4, seed=0)
        R, _ = D.boundary_distance(plant.B, rep.M, rep.epsilon, samples, rep.theta_I_star)
        dirs = random_directions((3, 4), 30, seed=1)
        ls = line_search_distance(plant.B, rep.M, rep.epsilon, samples, rep.theta_I_star, dirs)
        assert ls >= R - 1e-8

    def test_exact_minimiser_lies_on_boundary(self, admire_design):
        plant, _, _, rep = admire_design
        samples = D.sample_lambda_set(rep.gamma, 4, 20, seed=0)
        R, (idx, i) = D.boundary_distance(plant.B, rep.M, rep.epsilon, samples, rep.theta_I_star)
        lam = samples[idx]
        b = plant.B[i] * lam
        a = rep.theta_I_star @ b - np.eye(3)[i]
        # move theta along the gradient direction of ||theta b - e_i|| in the a direction
        d = np.outer(a / np.linalg.norm(a), b / np.linalg.norm(b))
        ls = line_search_distance(plant.B, rep.M, rep.epsilon, [lam], rep.theta_I_star, [d])
        assert ls == pytest.approx(R, abs=1e-7)

    def test_epsilon_to_limit_collapses(self):
        B = np.eye(2)
        Rs = [D.boundary_distance(B, np.ones(2), e, [np.ones(2)], np.eye(2))[0]
              for e in (0.5, 0.9, 0.99, 0.9999)]
        assert all(a > b for a, b in zip(Rs, Rs[1:])) and Rs[-1] < 0.011
        with pytest.raises(D.DesignError) as exc:
            D.projection_boundary_opt(B, np.ones(2), 1 - 1e-14, [np.ones(2)], np.eye(2))
        assert exc.value.step == 5

    def test_printed_box_centres_inside_E(self, admire_plant):
        lo, hi = printed_boxes()
        rows = D.necessary_condition_rows(admire_plant.B, np.ones(4), 0.5 * (lo + hi))
        assert np.all(rows <= PRINTED_M ** 2 / PRINTED_M.max() ** 2 - 1e-3)


class TestDesignInvariants:
    def test_ideal_certificate(self, admire_design):
        plant, _, _, rep = admire_design
        c = rep.M ** 2 / rep.M.max() ** 2 - rep.epsilon
        for lam in D.sample_lambda_set(rep.gamma, 4, 200, 0):
            assert np.all(D.necessary_condition_rows(plant.B, lam, rep.theta_I_star) <= c + 1e-9)

    def test_box_vertices(self, admire_design):
        plant, act, _, rep = admire_design
        c = rep.M ** 2 / rep.M.max() ** 2 - rep.epsilon
        samples = D.sample_lambda_set(rep.gamma, 4, 200, 0)
        verts = np.array(list(box_vertices(rep.bounds)))
        for th in verts[::7]:
            assert D.omega_theta_contains(th, rep.M, act.u_max)
        for lam in samples:
            D_ = np.einsum("ij,vkj->vik", plant.B * lam, verts) - np.eye(3)
            assert np.all(np.sum(D_ ** 2, axis=2) <= c + 1e-9)

    def test_rho_bar_below_ratio(self, admire_design):
        rep = admire_design[3]
        assert np.all(rep.rho_bar < rep.M / rep.M.max())

    def test_ideal_inside_shrunk_box(self, admire_design):
        rep = admire_design[3]
        assert rep.bounds.strictly_inside_inner(rep.theta_I_star)

    def test_lambda_bar_admitted(self, admire_design):
        rep = admire_design[3]
        assert np.all(rep.W1 + rep.lambda_bar * rep.W2 <= 0)


class TestRhoBudget:
    def test_collapsed_box(self, admire_plant):
        th = D.ideal_theta(admire_plant.B)
        b = ProjectionBounds.from_box(th - 1e-13, th + 1e-13)
        rho_bar, rho, ok = D.rho_budget(admire_plant.B, [np.ones(4)], b, np.ones(3), [0.1] * 3)
        assert np.all(rho_bar < 1e-11)
        np.testing.assert_allclose(rho, 0.1, atol=1e-11)
        assert ok

    def test_matches_vertex_enumeration(self, admire_design):
        plant, _, _, rep = admire_design
        samples = D.sample_lambda_set(rep.gamma, 4, 5, 0)
        rho_bar, _, _ = D.rho_budget(plant.B, samples, rep.bounds, rep.M, np.zeros(3))
        verts = np.array(list(box_vertices(rep.bounds)))
        brute = np.zeros(3)
        for lam in samples:
            D_ = np.einsum("ij,vkj->vik", plant.B * lam, verts) - np.eye(3)
            brute = np.maximum(brute, np.sqrt(np.sum(D_ ** 2, axis=2)).max(axis=0))
        np.testing.assert_allclose(rho_bar, brute, rtol=1e-12)

    def test_admire_disturbance_budget(self, admire_design):
        rep = admire_design[3]
        assert rep.rho_ok
        np.testing.assert_allclose(rep.rho, rep.rho_bar * rep.M.max() + 0.1)


class TestSmcFeasibility:
    def test_rest_case(self, admire_plant):
        W1, W2, lam, ok = D.smc_feasibility(admire_plant, np.ones(3), np.full(3, 0.5),
                                            0, 0, 0, np.zeros(3), np.zeros(3), 1.0, 0.1)
        np.testing.assert_allclose(W1, -0.5)
        assert ok and lam == 50.0

    def test_zero_margin(self, admire_plant):
        *_, ok = D.smc_feasibility(admire_plant, np.ones(3), np.ones(3),
                                   0, 0, 0, np.zeros(3), np.zeros(3), 1.0, 0.1)
        assert not ok

    def test_hand_evaluation(self, admire_plant):
        M, rho = np.full(3, 2.0), np.full(3, 0.5)
        rbi, rdi = np.array([0.01, 0.02, 0.03]), np.array([0.1, 0.1, 0.1])
        k, xi = 1.2, 0.1
        W1, W2, lam, ok = D.smc_feasibility(admire_plant, M, rho, 0.01, 0.02, 0.05, rbi, rdi, k, xi)
        K2 = k / xi * np.linalg.norm(admire_plant.A12, 2)
        a = np.array([10.5123, 2.6221 + 0.0030, 0.7075])
        want = a * (k * 0.01 + (1 + K2) * 0.02 + K2 * 0.05 + rbi) + rdi - M + rho
        np.testing.assert_allclose(W1, want, rtol=1e-12)
        np.testing.assert_allclose(W2, 0.02 + 2 / np.pi * rbi)

    def test_admire_admits_three(self, admire_design):
        rep = admire_design[3]
        assert rep.lambda_bar >= 3
        assert np.all(rep.W1 + 3 * rep.W2 <= 0)


class TestPipeline:
    def test_admire_feasible(self, admire_design):
        rep = admire_design[3]
        assert rep.feasible and rep.failed_step is None
        assert np.all(rep.M_attainable >= PRINTED_M)
        assert 0 < rep.gamma < 1

    def test_tiny_limits_fail_at_step_11(self, admire_plant):
        act = presets.admire_actuators()
        env = D.Envelopes(0, 0, presets.ADMIRE_ENVELOPES["r_bar_i"],
                          presets.ADMIRE_ENVELOPES["rdot_bar_i"], np.full(3, 0.1))
        rep = D.run_pipeline(admire_plant, act.u_max * 1e-3, env, D.DesignOptions())
        assert not rep.feasible and rep.failed_step == 11

    def test_toy_identity_plant(self):
        plant = LinearPlant.from_matrices(np.array([[-1.0, 0.0], [0.5, -1.0]]),
                                          np.array([[0.0, 0.0], [1.0, 1.0]]), 1)
        opts = D.DesignOptions(epsilon=0.2)
        small = D.Envelopes(0.0, 0.0, [0.01], [0.01], [0.05])
        rep = D.run_pipeline(plant, np.array([1.0, 1.0]), small, opts)
        assert rep.feasible and rep.lambda_bar > 0
        # ten times larger references exhaust the switching margin
        large = D.Envelopes(0.0, 0.0, [0.1], [0.1], [0.05])
        rep = D.run_pipeline(plant, np.array([1.0, 1.0]), large, opts)
        assert not rep.feasible and rep.failed_step == 11

    def test_report_serialises(self, admire_design):
        d = admire_design[3].to_dict()
        assert list(d)[:3] == ["feasible", "failed_step", "message"]
        assert np.array(d["pseudo_inverse"]).shape == (4, 3)
        assert np.array(d["theta_min"]).shape == (3, 4)
        assert "lambda_bar" in d and d["decisions"]
