"""Dense quadratic forms q(v) = 1/2 v'Qv + b'v + c.

All cost functions in the game model (leader costs, the potential, encoding
objectives) are stored in this shape.  Matrices are symmetrized once at
construction and frozen; evaluation is plain NumPy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuadForm:
    """Quadratic function of a real vector.

    value(v) = 1/2 v' Q v + b' v + c, with Q symmetric (symmetrized on
    construction).  Instances are immutable; arithmetic helpers return new
    objects.
    """

    Q: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError(f"Q must be square, got {Q.shape}")
        if b.shape != (Q.shape[0],):
            raise ValueError(f"b has shape {b.shape}, expected ({Q.shape[0]},)")
        object.__setattr__(self, "Q", _frozen(0.5 * (Q + Q.T)))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @staticmethod
    def zeros(n: int) -> "QuadForm":
        return QuadForm(np.zeros((n, n)), np.zeros(n), 0.0)

    def value(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ self.Q @ v + self.b @ v + self.c)

    def grad(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.Q @ v + self.b

    def __add__(self, other: "QuadForm") -> "QuadForm":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return QuadForm(self.Q + other.Q, self.b + other.b, self.c + other.c)

    def scaled(self, s: float) -> "QuadForm":
        return QuadForm(s * self.Q, s * self.b, s * self.c)

    def restrict(self, keep: np.ndarray, fixed_idx: np.ndarray, fixed_vals: np.ndarray) -> "QuadForm":
        """Partial evaluation: fix coordinates `fixed_idx` at `fixed_vals`,
        return the form over the `keep` coordinates (in their given order)."""
        keep = np.asarray(keep, dtype=int)
        fixed_idx = np.asarray(fixed_idx, dtype=int)
        xf = np.asarray(fixed_vals, dtype=float)
        Qkk = self.Q[np.ix_(keep, keep)]
        Qkf = self.Q[np.ix_(keep, fixed_idx)]
        Qff = self.Q[np.ix_(fixed_idx, fixed_idx)]
        b_new = self.b[keep] + Qkf @ xf
        c_new = self.c + 0.5 * xf @ Qff @ xf + self.b[fixed_idx] @ xf
        return QuadForm(Qkk, b_new, c_new)

    def embed(self, idx: np.ndarray, n_new: int) -> "QuadForm":
        """Lift the form into an n_new-dimensional space where coordinate k of
        this form sits at position idx[k]."""
        idx = np.asarray(idx, dtype=int)
        Q = np.zeros((n_new, n_new))
        b = np.zeros(n_new)
        Q[np.ix_(idx, idx)] = self.Q
        b[idx] = self.b
        return QuadForm(Q, b, self.c)
