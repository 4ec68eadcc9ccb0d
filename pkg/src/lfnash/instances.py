"""Instance construction and file formats.

Owns the on-disk JSON schema for games and solution states (dense matrices,
explicit dimensions, format_version), the canonical-JSON content digests used
by the reproducibility manifests, and the small analytic fixture used across
the test suite.

Schema reference: docs/file_formats.md.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .errors import EncodingError
from .model import (
    MODES,
    Follower,
    FollowerConstraints,
    FollowerCost,
    HierarchicalGame,
    LeaderBlock,
    LeaderSpec,
)
from .quadform import QuadForm

FORMAT_VERSION = 1

# keys stripped before hashing so embedding a manifest reference does not
# change the content identity of the file it is embedded in
VOLATILE_KEYS = ("manifest_digest",)


def two_follower_toy(pin_x: bool = False, mode: str = "variational") -> HierarchicalGame:
    """Single-leader fixture with a hand-solvable follower equilibrium.

    One leader with scalar x constrained to [0, 2] (as explicit rows), two
    followers with cost 1/2 y^2 - x y, private rows y >= 0, one shared row
    y_1 + y_2 >= 1, and leader cost (x-1)^2 + (y_1-1)^2.

    The followers' variational equilibrium has a closed form: y = (x, x) with
    shared multiplier 0 for x >= 1/2, and y = (1/2, 1/2) with shared
    multiplier 1/2 - x below.  The leader optimum is x = 1, y = (1, 1) with
    cost 0.  With pin_x=True an extra row -x >= 0 pins x to 0, moving the
    optimum onto the active-shared-row branch: y = (1/2, 1/2), cost 5/4.
    """
    followers = []
    for _ in range(2):
        cost = FollowerCost(Q=[[1.0]], q=[0.0], R=[[-1.0]])
        cons = FollowerConstraints(
            D_own=[[1.0]], A=[[0.0]], e=[0.0],
            B=[[0.0]], E=([[1.0]], [[1.0]]), c=[1.0])
        followers.append(Follower(cost=cost, cons=cons))
    G = [[1.0], [-1.0]]
    g0 = [0.0, 2.0]
    if pin_x:
        G.append([-1.0])
        g0.append(0.0)
    cost_g = QuadForm(Q=[[2.0]], b=[-2.0], c=1.0)
    cost_h = QuadForm(Q=np.diag([0.0, 2.0, 0.0]), b=[0.0, -2.0, 0.0], c=1.0)
    leader = LeaderSpec(
        n=1, G=np.array(G), g0=np.array(g0),
        x_lb=np.array([-np.inf]), x_ub=np.array([np.inf]),
        cost_g=cost_g, cost_h=cost_h, followers=tuple(followers))
    return HierarchicalGame(
        leaders=(leader,), potential_W=cost_g, mode=mode,
        metadata={"name": "toy-pinned" if pin_x else "toy"})


def toy_follower_equilibrium(x: float) -> tuple:
    """Analytic variational equilibrium of the toy fixture's follower game.

    Returns (y, lam, delta) for the given leader decision x.
    """
    x = float(x)
    if x >= 0.5:
        return np.array([x, x]), (np.zeros(1), np.zeros(1)), np.zeros(1)
    return np.array([0.5, 0.5]), (np.zeros(1), np.zeros(1)), np.array([0.5 - x])


# ---- array/JSON helpers ------------------------------------------------


def _mat(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _bounds_out(v) -> list:
    """Bound vector to JSON: non-finite entries become null."""
    return [float(x) if np.isfinite(x) else None for x in np.asarray(v, dtype=float)]


def _bounds_in(lst, sign: float) -> np.ndarray:
    return np.array([sign * np.inf if v is None else float(v) for v in lst])


def _quad_out(f: QuadForm) -> dict:
    return {"Q": _mat(f.Q), "b": _mat(f.b), "c": float(f.c)}


def _quad_in(d: dict) -> QuadForm:
    return QuadForm(Q=np.array(d["Q"], dtype=float).reshape(len(d["b"]), len(d["b"])),
                    b=d["b"], c=d["c"])


def game_to_dict(g: HierarchicalGame) -> dict:
    leaders = []
    for ld in g.leaders:
        fl = []
        for f in ld.followers:
            fl.append({
                "cost": {
                    "Q": _mat(f.cost.Q), "q": _mat(f.cost.q), "R": _mat(f.cost.R),
                    "S": {str(mu): _mat(S) for mu, S in sorted(f.cost.S.items())},
                    "c0": float(f.cost.c0),
                },
                "private": {
                    "D_own": _mat(f.cons.D_own), "A": _mat(f.cons.A), "e": _mat(f.cons.e),
                    "D_cross": {str(mu): _mat(D) for mu, D in sorted(f.cons.D_cross.items())},
                },
                "shared": {
                    "B": _mat(f.cons.B), "E": [_mat(Em) for Em in f.cons.E], "c": _mat(f.cons.c),
                },
                "y_lb": None if f.y_lb is None else _bounds_out(f.y_lb),
                "y_ub": None if f.y_ub is None else _bounds_out(f.y_ub),
            })
        leaders.append({
            "n": ld.n,
            "own_rows": {"G": _mat(ld.G), "g0": _mat(ld.g0)},
            "x_lb": _bounds_out(ld.x_lb), "x_ub": _bounds_out(ld.x_ub),
            "cost_g": _quad_out(ld.cost_g), "cost_h": _quad_out(ld.cost_h),
            "followers": fl,
        })
    return {
        "format_version": FORMAT_VERSION,
        "kind": "instance",
        "mode": g.mode,
        "metadata": dict(g.metadata),
        "leaders": leaders,
        "potential_W": None if g.potential_W is None else _quad_out(g.potential_W),
    }


def game_from_dict(d: dict) -> HierarchicalGame:
    if d.get("format_version") != FORMAT_VERSION:
        raise EncodingError(f"unsupported format_version {d.get('format_version')!r}")
    if d.get("kind") != "instance":
        raise EncodingError(f"expected kind 'instance', got {d.get('kind')!r}")
    if d.get("mode") not in MODES:
        raise EncodingError(f"mode must be one of {MODES}")
    leaders = []
    for lj in d["leaders"]:
        fl = []
        for fj in lj["followers"]:
            cj, pj, sj = fj["cost"], fj["private"], fj["shared"]
            p = len(cj["q"])
            cost = FollowerCost(
                Q=np.array(cj["Q"], dtype=float).reshape(p, p),
                q=cj["q"],
                R=np.array(cj["R"], dtype=float).reshape(p, lj["n"]),
                S={int(mu): np.array(S, dtype=float) for mu, S in cj.get("S", {}).items()},
                c0=cj.get("c0", 0.0))
            r = len(pj["e"])
            dsh = len(sj["c"])
            cons = FollowerConstraints(
                D_own=np.array(pj["D_own"], dtype=float).reshape(r, p),
                A=np.array(pj["A"], dtype=float).reshape(r, lj["n"]),
                e=pj["e"],
                B=np.array(sj["B"], dtype=float).reshape(dsh, lj["n"]),
                E=tuple(np.array(Em, dtype=float).reshape(dsh, -1) if np.size(Em) else np.zeros((dsh, 0))
                        for Em in sj["E"]),
                c=sj["c"],
                D_cross={int(mu): np.array(D, dtype=float) for mu, D in pj.get("D_cross", {}).items()})
            fl.append(Follower(
                cost=cost, cons=cons,
                y_lb=None if fj.get("y_lb") is None else _bounds_in(fj["y_lb"], -1.0),
                y_ub=None if fj.get("y_ub") is None else _bounds_in(fj["y_ub"], +1.0)))
        leaders.append(LeaderSpec(
            n=lj["n"],
            G=np.array(lj["own_rows"]["G"], dtype=float).reshape(-1, lj["n"]) if np.size(lj["own_rows"]["G"]) else np.zeros((0, lj["n"])),
            g0=np.array(lj["own_rows"]["g0"], dtype=float),
            x_lb=_bounds_in(lj["x_lb"], -1.0), x_ub=_bounds_in(lj["x_ub"], +1.0),
            cost_g=_quad_in(lj["cost_g"]), cost_h=_quad_in(lj["cost_h"]),
            followers=tuple(fl)))
    return HierarchicalGame(
        leaders=tuple(leaders),
        potential_W=None if d.get("potential_W") is None else _quad_in(d["potential_W"]),
        mode=d["mode"],
        metadata=dict(d.get("metadata", {})))


def blocks_to_dict(blocks) -> list:
    out = []
    for b in blocks:
        out.append({
            "x": _mat(b.x),
            "y": [_mat(v) for v in b.y],
            "lam": [_mat(v) for v in b.lam],
            "delta": [_mat(v) for v in b.delta],
            "s": [_mat(v) for v in b.s],
            "t": [_mat(v) for v in b.t],
        })
    return out


def blocks_from_dict(rows) -> list:
    return [LeaderBlock(x=np.array(r["x"], dtype=float),
                        y=tuple(np.array(v, dtype=float) for v in r["y"]),
                        lam=tuple(np.array(v, dtype=float) for v in r["lam"]),
                        delta=tuple(np.array(v, dtype=float) for v in r["delta"]),
                        s=tuple(np.array(v, dtype=float) for v in r["s"]),
                        t=tuple(np.array(v, dtype=float) for v in r["t"]))
            for r in rows]


# ---- canonical serialization and digests --------------------------------


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace, shortest-round-trip
    floats, NaN/Infinity rejected (bounds use null instead)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj) -> str:
    """sha256 of the canonical JSON, ignoring volatile embedding keys."""
    if isinstance(obj, dict):
        obj = {k: v for k, v in obj.items() if k not in VOLATILE_KEYS}
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def save_instance(g: HierarchicalGame, path, manifest_digest: str = None) -> str:
    d = game_to_dict(g)
    if manifest_digest is not None:
        d["manifest_digest"] = manifest_digest
    with open(path, "w") as fh:
        json.dump(d, fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")
    return digest(d)


def load_instance(path) -> HierarchicalGame:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise EncodingError(f"not valid JSON: {exc}") from exc
    return game_from_dict(d)
