"""Single-level mixed-integer encoding of a leader's problem.

Structural values for the two-follower toy are frozen from hand derivation;
the equivalence properties compare the encoding's feasible set against
follower optimality certificates computed independently.
"""

import numpy as np
import pytest

from instgen import tiny_instance
from lfnash.encoding import (
    BigMPolicy,
    MIEncoding,
    audit_point,
    build_encoding,
    export_lp_text,
    kkt_residual,
)
from lfnash.errors import EncodingError
from lfnash.instances import two_follower_toy, toy_follower_equilibrium
from lfnash.miqp import PlainProgram, SolverConfig, decompose_objective, solve
from lfnash.model import Follower, FollowerConstraints, FollowerCost
from lfnash.qp import solve_qp


@pytest.fixture(scope="module")
def toy():
    return two_follower_toy()


@pytest.fixture(scope="module")
def toy_enc(toy):
    return build_encoding(toy, 0)


def _flat(enc, x, y, lam, delta, s, t):
    v = np.zeros(enc.n_vars)
    v[enc.var_map["x"]] = x
    for nu, yv in enumerate(y):
        v[enc.var_map[f"y_{nu}"]] = yv
    for nu, lv in enumerate(lam):
        v[enc.var_map[f"lam_{nu}"]] = lv
    for k, dv in enumerate(delta):
        v[enc.var_map[f"delta_{k}"]] = dv
    for nu, sv in enumerate(s):
        v[enc.var_map[f"s_{nu}"]] = sv
    for k, tv in enumerate(t):
        v[enc.var_map[f"t_{k}"]] = tv
    return v


class TestToyLayout:
    def test_variable_count_and_map(self, toy_enc):
        assert toy_enc.n_vars == 9
        got = {k: list(map(int, v)) for k, v in toy_enc.var_map.items()}
        assert got == {
            "x": [0], "y_0": [1], "y_1": [2],
            "lam_0": [3], "lam_1": [4], "delta_0": [5],
            "s_0": [6], "s_1": [7], "t_0": [8],
        }

    def test_binaries(self, toy_enc):
        assert list(map(int, toy_enc.binary_idx)) == [6, 7, 8]

    def test_stationarity_rows(self, toy_enc):
        # y_nu - x - lam_nu - delta = 0 for both followers
        want = np.array([
            [-1.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0],
            [-1.0, 0.0, 1.0, 0.0, -1.0, -1.0, 0.0, 0.0, 0.0],
        ])
        np.testing.assert_allclose(toy_enc.A_eq, want)
        np.testing.assert_allclose(toy_enc.b_eq, np.zeros(2))

    def test_caps_fall_back_on_unbounded_slack(self, toy_enc):
        # all toy variables unbounded, so interval slack caps degrade to the
        # dual cap rather than inventing a tighter bound
        assert [list(a) for a in toy_enc.cap_slack_s] == [[200.0], [200.0]]
        assert list(toy_enc.cap_slack_t) == [200.0]
        assert all(float(a[0]) == 200.0 for a in toy_enc.bigM_s)

    def test_mode_recorded(self, toy_enc):
        assert toy_enc.mode == "variational"

    def test_private_and_shared_row_lookup(self, toy_enc):
        assert toy_enc.n_private_rows(0) == 1
        assert toy_enc.n_private_rows(1) == 1
        rows0 = toy_enc.private_slack_rows(0)
        rows1 = toy_enc.private_slack_rows(1)
        shared = toy_enc.shared_slack_rows()
        assert len(rows0) == len(rows1) == 1
        assert len(shared) == 1
        all_rows = set(map(int, rows0)) | set(map(int, rows1)) | set(map(int, shared))
        assert len(all_rows) == 3


class TestToyFeasibility:
    def test_equilibrium_point_feasible(self, toy_enc):
        # x = 1: both followers at y = 1, shared row slack 1, all duals zero
        v = _flat(toy_enc, [1.0], [[1.0], [1.0]], [[0.0], [0.0]], [[0.0]],
                  [0.0, 0.0], [0.0])
        assert toy_enc.violation(v) <= 1e-12

    def test_constrained_point_feasible(self, toy_enc):
        # x = 0: followers pushed to the shared row, delta = 0.5, t = 1
        v = _flat(toy_enc, [0.0], [[0.5], [0.5]], [[0.0], [0.0]], [[0.5]],
                  [0.0, 0.0], [1.0])
        assert toy_enc.violation(v) <= 1e-12

    def test_complementarity_violation_detected(self, toy_enc):
        # positive delta with t = 0 must trip the delta cap row
        v = _flat(toy_enc, [0.0], [[0.5], [0.5]], [[0.0], [0.0]], [[0.5]],
                  [0.0, 0.0], [0.0])
        assert toy_enc.violation(v) >= 0.5 - 1e-12

    def test_objective_values(self, toy, toy_enc):
        v_opt = _flat(toy_enc, [1.0], [[1.0], [1.0]], [[0.0], [0.0]], [[0.0]],
                      [0.0, 0.0], [0.0])
        assert toy_enc.objective_for().value(v_opt) == pytest.approx(0.0, abs=1e-12)
        v_pin = _flat(toy_enc, [0.0], [[0.5], [0.5]], [[0.0], [0.0]], [[0.5]],
                      [0.0, 0.0], [1.0])
        assert toy_enc.objective_for().value(v_pin) == pytest.approx(1.25, abs=1e-12)

    def test_proximal_objective_adds_distance(self, toy_enc):
        center = np.zeros(toy_enc.n_vars)
        base = toy_enc.objective_for()
        prox = toy_enc.proximal_objective(None, 2.0, center)
        v = np.arange(toy_enc.n_vars, dtype=float) / 10.0
        want = base.value(v) + 2.0 * float(v @ v)
        assert prox.value(v) == pytest.approx(want, abs=1e-10)


class TestBlockRoundTrip:
    def test_extract_and_rebuild(self, toy_enc):
        v = _flat(toy_enc, [0.0], [[0.5], [0.5]], [[0.0], [0.0]], [[0.5]],
                  [0.0, 0.0], [1.0])
        blk = toy_enc.extract_block(v)
        assert blk.x[0] == pytest.approx(0.0)
        assert blk.y[0][0] == pytest.approx(0.5)
        assert blk.delta[0][0] == pytest.approx(0.5)
        assert blk.t[0][0] == pytest.approx(1.0)
        back = toy_enc.block_to_flat(blk)
        np.testing.assert_allclose(back, v)

    def test_binaries_rounded_clean(self, toy_enc):
        v = _flat(toy_enc, [1.0], [[1.0], [1.0]], [[0.0], [0.0]], [[0.0]],
                  [1e-9, -1e-12], [1.0 - 1e-9])
        blk = toy_enc.extract_block(v)
        assert blk.s[0][0] == 0.0 and blk.s[1][0] == 0.0
        assert blk.t[0][0] == 1.0
        # no negative zero leaking out of the rounding
        assert not np.signbit(blk.s[1][0])


class TestKktResidual:
    def test_equilibrium_map_residual_zero(self, toy):
        worst = 0.0
        for x in np.linspace(0.0, 2.0, 20):
            y, lam, delta = toy_follower_equilibrium(x)
            res = kkt_residual(toy, 0, np.array([x]),
                               [np.array([y[0]]), np.array([y[1]])],
                               [np.array([lam[0]]), np.array([lam[1]])],
                               np.array([delta[0]]))
            worst = max(worst, res.max())
        assert worst <= 1e-10

    def test_off_equilibrium_point_flagged(self, toy):
        res = kkt_residual(toy, 0, np.array([1.0]),
                           [np.array([0.0]), np.array([0.0])],
                           [np.array([0.0]), np.array([0.0])],
                           np.array([0.0]))
        assert res.stationarity_inf == pytest.approx(1.0)
        assert res.primal_inf == pytest.approx(1.0)

    def test_delta_broadcast_forms_agree(self, toy):
        y, lam, delta = toy_follower_equilibrium(0.2)
        args = (toy, 0, np.array([0.2]),
                [np.array([y[0]]), np.array([y[1]])],
                [np.array([lam[0]]), np.array([lam[1]])])
        r_vec = kkt_residual(*args, np.array([delta[0]]))
        r_list = kkt_residual(*args, [np.array([delta[0]])])
        assert r_vec.max() == pytest.approx(r_list.max(), abs=1e-15)

    def test_wrong_multiplier_length_rejected(self, toy):
        with pytest.raises(EncodingError):
            kkt_residual(toy, 0, np.array([1.0]),
                         [np.array([1.0]), np.array([1.0])],
                         [np.array([0.0, 0.0]), np.array([0.0])],
                         np.array([0.0]))


class TestBigMPolicy:
    def test_default_and_scaling(self):
        pol = BigMPolicy()
        assert pol.dual_cap == 200.0
        doubled = pol.scaled(2.0)
        assert doubled.dual_cap == 400.0
        assert pol.dual_cap == 200.0

    def test_bad_cap_rejected(self):
        with pytest.raises(EncodingError):
            BigMPolicy(dual_cap=0.0)

    def test_interval_slack_caps_from_boxes(self):
        # follower y in [0, 2], one private row y >= 0, one shared row
        # y_1 + y_2 >= 1: materialized rows get finite interval caps
        f = Follower(
            cost=FollowerCost(Q=[[1.0]], q=[0.0], R=[[-1.0]]),
            cons=FollowerConstraints(D_own=[[1.0]], A=[[0.0]], e=[0.0],
                                     B=[[0.0]], E=([[1.0]], [[1.0]]), c=[1.0]),
            y_lb=np.array([0.0]), y_ub=np.array([2.0]),
        )
        g = two_follower_toy()
        ld = g.leaders[0]
        from lfnash.model import HierarchicalGame, LeaderSpec
        ld2 = LeaderSpec(n=1, G=ld.G, g0=ld.g0,
                         x_lb=np.array([0.0]), x_ub=np.array([1.0]),
                         cost_g=ld.cost_g, cost_h=ld.cost_h,
                         followers=(f, f))
        g2 = HierarchicalGame(leaders=[ld2], mode="variational",
                              potential_W=g.potential_W)
        enc = build_encoding(g2, 0)
        # private parts: D row slack y in [0,2] -> 2; lb row y - 0 -> 2;
        # ub row 2 - y -> 2
        assert enc.n_private_rows(0) == 3
        np.testing.assert_allclose(enc.cap_slack_s[0], [2.0, 2.0, 2.0])
        # shared slack y_1 + y_2 - 1 in [-1, 3] -> cap 3
        np.testing.assert_allclose(enc.cap_slack_t, [3.0])

    def test_slack_floor_applies(self):
        # degenerate row with zero slack range still gets a positive cap
        f = Follower(
            cost=FollowerCost(Q=[[1.0]], q=[0.0], R=[[0.0]]),
            cons=FollowerConstraints(D_own=[[0.0]], A=[[0.0]], e=[0.0],
                                     B=np.zeros((0, 1)), E=(np.zeros((0, 1)),),
                                     c=np.zeros(0)),
            y_lb=np.array([0.0]), y_ub=np.array([0.0]),
        )
        from lfnash.model import HierarchicalGame, LeaderSpec
        from lfnash.quadform import QuadForm
        ld = LeaderSpec(n=1, G=np.zeros((0, 1)), g0=np.zeros(0),
                        x_lb=np.array([0.0]), x_ub=np.array([1.0]),
                        cost_g=QuadForm([[2.0]], [0.0], 0.0),
                        cost_h=QuadForm(np.zeros((2, 2)), np.zeros(2), 0.0),
                        followers=(f,))
        g = HierarchicalGame(leaders=[ld], mode="variational",
                             potential_W=QuadForm([[2.0]], [0.0], 0.0))
        enc = build_encoding(g, 0)
        assert all(c >= 1.0 for c in enc.cap_slack_s[0])


class TestAudit:
    def test_near_cap_multiplier_flagged(self, toy_enc):
        v = _flat(toy_enc, [1.0], [[1.0], [1.0]], [[199.0], [0.0]], [[0.0]],
                  [1.0, 0.0], [0.0])
        rep = audit_point(toy_enc, v)
        assert not rep.ok
        assert any("follower 0 multiplier 0 at 199" in f and "200" in f
                   for f in rep.flags)

    def test_clean_point_passes(self, toy_enc):
        v = _flat(toy_enc, [1.0], [[1.0], [1.0]], [[0.0], [0.0]], [[0.0]],
                  [0.0, 0.0], [0.0])
        assert audit_point(toy_enc, v).ok

    def test_near_cap_slack_flagged(self, toy_enc):
        # slack close to its cap while the binary claims activity headroom
        v = _flat(toy_enc, [1.0], [[199.5], [1.0]], [[0.0], [0.0]], [[0.0]],
                  [0.0, 0.0], [0.0])
        rep = audit_point(toy_enc, v)
        assert any("slack" in f for f in rep.flags)


class TestModes:
    def test_gne_mode_gets_per_follower_delta(self):
        g = two_follower_toy(mode="gne")
        enc = build_encoding(g, 0)
        assert "delta_1" in enc.var_map and "t_1" in enc.var_map
        assert enc.n_vars == 11

    def test_pinned_toy_mode_gap(self):
        # with x pinned to 0 the variational optimum is 1.25 while the gne
        # encoding admits the asymmetric response y = (1, 0) at cost 1
        vals = {}
        for mode in ("variational", "gne"):
            g = two_follower_toy(pin_x=True, mode=mode)
            enc = build_encoding(g, 0)
            prog = PlainProgram.build(enc.n_vars, A_eq=enc.A_eq, b_eq=enc.b_eq,
                                      A_in=enc.A_in, b_in=enc.b_in,
                                      lb=enc.lb, ub=enc.ub,
                                      binary_idx=enc.binary_idx)
            rep = solve(prog, decompose_objective(enc.objective), SolverConfig())
            assert rep.status == "optimal"
            vals[mode] = rep.value
        assert vals["variational"] == pytest.approx(1.25, abs=1e-8)
        assert vals["gne"] == pytest.approx(1.0, abs=1e-8)


class TestLeafKktEquivalence:
    """Every feasible leaf of the encoding certifies follower optimality."""

    @pytest.mark.parametrize("seed", [0, 1, 2, 11, 23, 37])
    def test_leaf_points_satisfy_kkt(self, seed):
        game = tiny_instance(seed, mode="gne" if seed % 2 else "variational")
        enc = build_encoding(game, 0)
        n_bits = len(enc.binary_idx)
        assert n_bits <= 8
        feasible_leaves = 0
        for pattern in range(2 ** n_bits):
            bits = [(pattern >> k) & 1 for k in range(n_bits)]
            A_eq = [np.eye(enc.n_vars)[j] for j in enc.binary_idx]
            A_eq = np.vstack([enc.A_eq] + A_eq) if len(A_eq) else enc.A_eq
            b_eq = np.concatenate([enc.b_eq, np.array(bits, dtype=float)])
            res = solve_qp(np.zeros((enc.n_vars, enc.n_vars)),
                           np.zeros(enc.n_vars),
                           A_eq=A_eq, b_eq=b_eq, A_in=enc.A_in, b_in=enc.b_in,
                           lb=enc.lb, ub=enc.ub)
            if res.status != "optimal":
                continue
            feasible_leaves += 1
            blk = enc.extract_block(res.x)
            resid = kkt_residual(game, 0, blk.x, list(blk.y), list(blk.lam),
                                 list(blk.delta))
            assert resid.max() <= 1e-6, (seed, pattern, resid)
        assert feasible_leaves >= 1

    def test_toy_equilibrium_points_are_encoding_feasible(self, toy_enc):
        # converse direction on the toy: analytic certificates map into the
        # encoding with binaries chosen from the activity pattern
        for x in np.linspace(0.0, 2.0, 9):
            y, lam, delta = toy_follower_equilibrium(x)
            shared_active = delta[0] > 0 or abs(y[0] + y[1] - 1.0) < 1e-12
            v = _flat(toy_enc, [x], [[y[0]], [y[1]]],
                      [[lam[0]], [lam[1]]], [[delta[0]]],
                      [1.0 if y[0] <= 1e-12 else 0.0,
                       1.0 if y[1] <= 1e-12 else 0.0],
                      [1.0 if shared_active else 0.0])
            assert toy_enc.violation(v) <= 1e-9, x


class TestLpExport:
    def test_export_is_readable_text(self, toy_enc, tmp_path):
        path = tmp_path / "toy.lp"
        export_lp_text(toy_enc, toy_enc.objective, path)
        text = path.read_text()
        assert "Minimize" in text
        assert "Binary" in text
        # binaries listed by flat index
        assert "v6 v7 v8" in text
        assert "Subject To" in text
        assert text.rstrip().endswith("End")
