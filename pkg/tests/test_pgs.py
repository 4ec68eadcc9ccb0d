"""Proximal Gauss-Seidel: laws, best responses, runs, verification."""

import numpy as np
import pytest

from lfnash.errors import TrajectoryError
from lfnash.gauss_seidel import (
    PgsConfig,
    SweepRecord,
    Trajectory,
    cost_to_move,
    icrf_eval,
    initial_state,
    proximal_best_response,
    run,
    run_escalating,
    tau_update,
    verify_equilibrium,
)
from lfnash.instances import two_follower_toy
from lfnash.model import LeaderBlock


def _toy_block(x, y, lam, delta, s, t):
    return LeaderBlock(x=np.array([float(x)]),
                       y=(np.array([y[0]]), np.array([y[1]])),
                       lam=(np.array([lam[0]]), np.array([lam[1]])),
                       delta=(np.array([float(delta)]),),
                       s=(np.array([s[0]]), np.array([s[1]])),
                       t=(np.array([float(t)]),))


# the branch point x = 1/2 splits the toy equilibrium map; the center below
# sits on the active-shared-row branch
TOY_OPT = _toy_block(1.0, (1.0, 1.0), (0.0, 0.0), 0.0, (0.0, 0.0), 0.0)
TOY_CENTER = _toy_block(0.0, (0.5, 0.5), (0.0, 0.0), 0.5, (0.0, 0.0), 1.0)


class TestIcrf:
    def test_squared_euclidean(self):
        assert icrf_eval("squared-euclidean", [1.0, 0.0, 0.0]) == 1.0
        assert icrf_eval("squared-euclidean", [3.0, 4.0]) == 25.0

    def test_euclidean_approx_is_the_norm(self):
        assert icrf_eval("euclidean-approx", [3.0, 4.0]) == 5.0

    def test_unknown_kind_raises(self):
        with pytest.raises(ValueError):
            icrf_eval("manhattan", [1.0])


class TestTauUpdate:
    def test_small_move_shrinks_tau(self):
        assert tau_update(1.0, 0.1, 0.05) == 0.1

    def test_floor_binds(self):
        assert tau_update(0.1, 0.1, 0.5) == 0.1

    def test_fixed_point_detected(self):
        assert tau_update(1.0, 0.1, 0.0) == 0.1

    def test_laws_hold_on_a_grid(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            tau = float(rng.uniform(1e-4, 10))
            om = float(rng.uniform(0.01, 0.99))
            d = float(rng.uniform(0, 5))
            nxt = tau_update(tau, om, d)
            assert om * tau - 1e-15 <= nxt <= tau + 1e-15


class TestCostToMove:
    def test_identical_states(self):
        assert cost_to_move([TOY_OPT], [TOY_OPT]) == 0.0

    def test_unit_move(self):
        moved = _toy_block(2.0, (1.0, 1.0), (0.0, 0.0), 0.0, (0.0, 0.0), 0.0)
        assert cost_to_move([moved], [TOY_OPT]) == 1.0

    def test_max_over_leaders(self):
        a0 = _toy_block(0.0, (0.0, 0.0), (0.0, 0.0), 0.0, (0.0, 0.0), 0.0)
        b0 = _toy_block(np.sqrt(0.2), (0.0, 0.0), (0.0, 0.0), 0.0, (0.0, 0.0), 0.0)
        b1 = _toy_block(np.sqrt(0.7), (0.0, 0.0), (0.0, 0.0), 0.0, (0.0, 0.0), 0.0)
        d = cost_to_move([b0, b1], [a0, a0])
        assert d == pytest.approx(0.7)

    def test_binary_flip_counts_one(self):
        flipped = _toy_block(1.0, (1.0, 1.0), (0.0, 0.0), 0.0, (1.0, 0.0), 0.0)
        assert cost_to_move([flipped], [TOY_OPT]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cost_to_move([TOY_OPT], [TOY_OPT, TOY_OPT])


class TestProximalBestResponse:
    def test_tau_zero_reaches_global_optimum(self):
        g = two_follower_toy()
        blk, rep = proximal_best_response(g, 0, [TOY_CENTER], tau=0.0)
        assert rep.value == pytest.approx(0.0, abs=1e-8)
        assert blk.x[0] == pytest.approx(1.0, abs=1e-7)
        assert blk.y[0][0] == pytest.approx(1.0, abs=1e-7)
        assert blk.y[1][0] == pytest.approx(1.0, abs=1e-7)

    def test_huge_tau_pins_the_center(self):
        g = two_follower_toy()
        blk, _ = proximal_best_response(g, 0, [TOY_CENTER], tau=1e6)
        assert blk.diff_sqnorm(TOY_CENTER) < 1e-4

    def test_moderate_tau_lands_between(self):
        # at tau = 1 the proximal optimum trades leader cost against the
        # move; its combined value must sit strictly between the tau = 0
        # optimum (0) and the center's own cost (1.25)
        g = two_follower_toy()
        _, rep = proximal_best_response(g, 0, [TOY_CENTER], tau=1.0)
        assert 0.0 < rep.value < 1.25
        assert rep.value == pytest.approx(11.0 / 12.0, abs=1e-6)


class TestInitialState:
    def test_blocks_solve_their_own_subproblems(self):
        g = two_follower_toy()
        blocks, encs, progs = initial_state(g)
        assert len(blocks) == 1
        assert blocks[0].x[0] == pytest.approx(1.0, abs=1e-7)

    def test_seed_changes_only_the_draw(self):
        # the toy has one leader, so the opponent profile is empty and the
        # seeded draw cannot change the outcome
        g = two_follower_toy()
        a, _, _ = initial_state(g)
        b, _, _ = initial_state(g, seed=123)
        assert a[0].diff_sqnorm(b[0]) < 1e-14


class TestRun:
    def test_toy_converges_in_one_sweep(self):
        g = two_follower_toy()
        blocks, traj, status = run(g, PgsConfig(stop_eps=1e-8))
        assert status == "converged"
        assert blocks[0].x[0] == pytest.approx(1.0, abs=1e-7)
        # the first sweep lands on the optimum; the second records d = 0
        assert traj.records[-1].cost_to_move <= 1e-8

    def test_trajectory_laws(self):
        g = two_follower_toy()
        cfg = PgsConfig(stop_eps=1e-8)
        _, traj, _ = run(g, cfg)
        traj.check(n_leaders=1, gap_tol=1e-7, omega=cfg.omega)

    def test_max_sweeps_zero_returns_initial_state(self):
        g = two_follower_toy()
        blocks, traj, status = run(g, PgsConfig(max_sweeps=0))
        assert status == "sweep_limit"
        assert len(traj.records) == 0
        assert blocks[0].x[0] == pytest.approx(1.0, abs=1e-7)

    def test_descent_violation_is_caught(self):
        bad = Trajectory(algo="pgs", records=[
            SweepRecord(1, 5.0, 1.0, 1.0, (5.0,), 0.0, (0.0,)),
            SweepRecord(2, 6.0, 0.5, 0.5, (6.0,), 0.0, (0.0,)),
        ])
        with pytest.raises(TrajectoryError):
            bad.check(n_leaders=1, gap_tol=1e-7)

    def test_tau_increase_is_caught(self):
        bad = Trajectory(algo="pgs", records=[
            SweepRecord(1, 5.0, 1.0, 0.5, (5.0,), 0.0, (0.0,)),
            SweepRecord(2, 4.0, 0.5, 0.9, (4.0,), 0.0, (0.0,)),
        ])
        with pytest.raises(TrajectoryError):
            bad.check(n_leaders=1, gap_tol=1e-7)


class TestVerify:
    def test_optimum_certifies(self):
        g = two_follower_toy()
        blocks, _, _ = run(g, PgsConfig(stop_eps=1e-8))
        rep = verify_equilibrium(g, blocks, tol=1e-5)
        assert rep.certified
        assert max(rep.improvements) <= 1e-7

    def test_center_improves_by_5_over_4(self):
        g = two_follower_toy()
        rep = verify_equilibrium(g, [TOY_CENTER], tol=1e-5)
        assert not rep.certified
        assert rep.improvements[0] == pytest.approx(1.25, abs=1e-6)


class TestWriteCsv:
    def test_header_and_manifest_line(self, tmp_path):
        g = two_follower_toy()
        _, traj, _ = run(g, PgsConfig(stop_eps=1e-8))
        path = tmp_path / "traj.csv"
        traj.write_csv(path, manifest="abc123")
        lines = path.read_text().splitlines()
        assert lines[0] == "# manifest=abc123 algo=pgs"
        assert lines[1] == "sweep,potential,cost_to_move,tau,J_1,time_s"
        assert len(lines) == 2 + len(traj.records)

    def test_no_manifest_variant(self, tmp_path):
        traj = Trajectory(algo="pgs", records=[])
        path = tmp_path / "t.csv"
        traj.write_csv(path)
        assert path.read_text().splitlines()[0] == "# algo=pgs"


class TestEscalation:
    def test_toy_needs_one_attempt(self):
        g = two_follower_toy()
        res = run_escalating(g, PgsConfig(stop_eps=1e-8))
        assert res.attempts == 1
        assert res.status == "converged"
        assert res.flags == ()


class TestEuclideanApprox:
    def test_toy_converges_under_approx_icrf(self):
        g = two_follower_toy()
        blocks, traj, status = run(
            g, PgsConfig(stop_eps=1e-8, icrf="euclidean-approx"))
        assert status == "converged"
        assert blocks[0].x[0] == pytest.approx(1.0, abs=1e-6)
