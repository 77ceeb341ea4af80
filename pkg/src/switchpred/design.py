"""Synthesis front-end: gains, Lyapunov certificates and expected matrices.

The expected (average) matrices are min-max centers: the matrix minimizing
the largest distance to the family, in the selected induced norm.  The
center is found by subgradient descent on the max-distance objective
(step ``c / sqrt(k)``, best-iterate tracking), seeded with the element-wise
mean and the midpoint of the farthest pair; for two matrices the midpoint
is already a minimizer in any norm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numerics import (NormKind, induced_norm, is_hurwitz, pole_place,
                       solve_lyapunov)
from .plant import SwitchedPlantSpec

__all__ = [
    "DesignResult",
    "CenterConvergenceError",
    "chebyshev_center",
    "mean_fallback",
    "synthesize",
]


class CenterConvergenceError(RuntimeError):
    """Min-max center search failed to settle within the iteration cap."""


def _distances(Y: np.ndarray, Ys: np.ndarray, kind: NormKind):
    """Per-matrix distances plus the subgradient of the farthest one."""
    Dm = Y - Ys
    if kind is NormKind.FROBENIUS:
        dists = np.sqrt(np.sum(Dm * Dm, axis=(1, 2)))
        a = int(np.argmax(dists))
        r = float(dists[a])
        g = Dm[a] / r if r > 0 else np.zeros_like(Y)
        return dists, a, g
    U, s, Vt = np.linalg.svd(Dm)
    dists = s[:, 0]
    a = int(np.argmax(dists))
    return dists, a, np.outer(U[a, :, 0], Vt[a, 0])


def _radius(Y: np.ndarray, Ys: np.ndarray, kind: NormKind) -> float:
    if kind is NormKind.FROBENIUS:
        return float(np.sqrt(np.max(np.sum((Ys - Y) ** 2, axis=(1, 2)))))
    return float(np.max(np.linalg.svd(Y - Ys, compute_uv=False)[:, 0]))


def chebyshev_center(Y_list, kind: NormKind | str = NormKind.SPECTRAL,
                     tol: float = 1e-6, max_iter: int = 60_000
                     ) -> tuple[np.ndarray, float]:
    """Center minimizing the maximum norm distance to a matrix family.

    Subgradient descent on the max-distance objective from the
    element-wise mean, step ``c / sqrt(k)`` with ``c`` the starting
    radius; the returned center is the average of the tail iterates
    (which settles inside the optimal set when the spectral ball is flat
    there), guarded by the candidate starts:

    * strictly convex geometry (Frobenius norm, or row/column families,
      where the spectral ball is Euclidean): a candidate that ties or
      beats the settled point is exact and wins,
    * genuine matrices under the spectral norm: candidates win only when
      they improve the radius beyond numerical ties, since the midpoint
      of the farthest pair may be an extreme point of a flat optimal
      face.

    Raises :class:`CenterConvergenceError` when the best radius is still
    improving by more than ``tol`` near the iteration cap.
    """
    kind = NormKind.coerce(kind)
    if len(Y_list) == 0:
        raise ValueError("need at least one matrix")
    mats = [np.atleast_2d(np.asarray(Y, dtype=float)) for Y in Y_list]
    if len({M.shape for M in mats}) > 1:
        raise ValueError("matrices must share one shape")
    Ys = np.stack(mats)
    n = Ys.shape[0]
    if n == 1:
        return Ys[0].copy(), 0.0

    strictly_convex = kind is NormKind.FROBENIUS or min(Ys.shape[1:]) == 1

    # farthest-pair midpoint: the exact optimum whenever the diameter pair
    # stays active and the ball is strictly convex
    diffs = Ys[:, None] - Ys[None, :]
    if kind is NormKind.FROBENIUS:
        pairwise = np.sqrt(np.sum(diffs * diffs, axis=(2, 3)))
    else:
        pairwise = np.linalg.svd(diffs, compute_uv=False)[:, :, 0]
    i0, j0 = np.unravel_index(np.argmax(pairwise), pairwise.shape)
    midpoint = 0.5 * (Ys[i0] + Ys[j0])
    if n == 2:
        return midpoint, float(pairwise[i0, j0]) / 2.0

    mean = Ys.mean(axis=0)
    c = _radius(mean, Ys, kind)
    if c == 0.0:
        return mean, 0.0
    candidates = [(mean, c), (midpoint, _radius(midpoint, Ys, kind))]

    Y = mean.copy()
    best_r = c
    best_Y = mean.copy()
    best_r_at_checkpoint = np.inf
    checkpoint = (9 * max_iter) // 10
    tail_from = max_iter // 2
    tail_sum = np.zeros_like(Y)
    tail_n = 0
    for k in range(1, max_iter + 1):
        dists, active, g = _distances(Y, Ys, kind)
        r = float(dists[active])
        if r < best_r:
            best_r = r
            best_Y = Y.copy()
        if k == checkpoint:
            best_r_at_checkpoint = best_r
        Y = Y - (c / np.sqrt(k)) * g
        if k > tail_from:
            tail_sum += Y
            tail_n += 1

    if best_r_at_checkpoint - best_r > tol:
        raise CenterConvergenceError(
            f"still descending at the {max_iter}-iteration cap: best radius "
            f"improved by {best_r_at_checkpoint - best_r:.3e} over the last "
            f"tenth of the run (tolerance {tol:.1e})")

    settled = tail_sum / tail_n
    settled_r = _radius(settled, Ys, kind)

    # prefer the settled (face-interior) point among near-ties; adopt a
    # candidate or the best iterate only when it is genuinely better
    result, result_r = settled, settled_r
    margin = 0.0 if strictly_convex else tol
    for cand, cand_r in candidates + [(best_Y, best_r)]:
        if cand_r <= result_r - margin:
            result, result_r = cand.copy(), cand_r
    return result, result_r


def mean_fallback(Y_list) -> np.ndarray:
    """Element-wise mean of the family: the cheap alternative center."""
    if len(Y_list) == 0:
        raise ValueError("need at least one matrix")
    Ys = np.stack([np.asarray(Y, dtype=float) for Y in Y_list])
    return Ys.mean(axis=0)


@dataclass
class DesignResult:
    """Gains, certificates and expected matrices for one mode family."""

    A_list: np.ndarray
    B_list: np.ndarray
    K_list: np.ndarray   # (p, q) row gains
    S_list: np.ndarray   # (p, q, q)
    Q_list: np.ndarray   # (p, q, q)
    A_bar: np.ndarray
    B_bar: np.ndarray    # (q,)
    K_bar: np.ndarray    # (q,)
    eps: float           # max center distance over the three families
    eps_bar: float       # max pairwise distance over the three families
    radius_A: float
    radius_B: float
    radius_K: float
    norm_kind: NormKind

    @property
    def p(self) -> int:
        return self.A_list.shape[0]

    @property
    def q(self) -> int:
        return self.A_list.shape[1]

    def to_json_dict(self) -> dict:
        return {
            "norm_kind": self.norm_kind.value,
            "A_list": self.A_list.tolist(),
            "B_list": self.B_list.tolist(),
            "K_list": self.K_list.tolist(),
            "S_list": self.S_list.tolist(),
            "Q_list": self.Q_list.tolist(),
            "A_bar": self.A_bar.tolist(),
            "B_bar": self.B_bar.tolist(),
            "K_bar": self.K_bar.tolist(),
            "eps": self.eps,
            "eps_bar": self.eps_bar,
            "radius_A": self.radius_A,
            "radius_B": self.radius_B,
            "radius_K": self.radius_K,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "DesignResult":
        with open(path) as fh:
            d = json.load(fh)
        return cls(
            A_list=np.asarray(d["A_list"]), B_list=np.asarray(d["B_list"]),
            K_list=np.asarray(d["K_list"]), S_list=np.asarray(d["S_list"]),
            Q_list=np.asarray(d["Q_list"]), A_bar=np.asarray(d["A_bar"]),
            B_bar=np.asarray(d["B_bar"]), K_bar=np.asarray(d["K_bar"]),
            eps=d["eps"], eps_bar=d["eps_bar"], radius_A=d["radius_A"],
            radius_B=d["radius_B"], radius_K=d["radius_K"],
            norm_kind=NormKind(d["norm_kind"]))

    def report(self) -> str:
        lines = [
            "design result",
            f"  modes: {self.p}, state dim: {self.q}, norm: {self.norm_kind.value}",
            f"  eps (max center distance) : {self.eps:.6g}",
            f"  eps_bar (max pairwise)    : {self.eps_bar:.6g}",
            f"  family radii A/B/K        : {self.radius_A:.6g} / "
            f"{self.radius_B:.6g} / {self.radius_K:.6g}",
        ]
        for i in range(self.p):
            lines.append(f"  K_{i + 1} = {np.array2string(self.K_list[i], precision=6)}")
        lines.append(f"  K_bar = {np.array2string(self.K_bar, precision=6)}")
        lines.append(f"  A_bar = {np.array2string(self.A_bar, precision=6)}")
        lines.append(f"  B_bar = {np.array2string(self.B_bar, precision=6)}")
        for i in range(self.p):
            lines.append(f"  S_{i + 1} = {np.array2string(self.S_list[i], precision=6)}")
        return "\n".join(lines)


def _pairwise_max(Ys: np.ndarray, kind: NormKind) -> float:
    worst = 0.0
    for i in range(Ys.shape[0]):
        for j in range(i + 1, Ys.shape[0]):
            worst = max(worst, induced_norm(Ys[i] - Ys[j], kind))
    return worst


def synthesize(spec: SwitchedPlantSpec, poles, Q_list=None,
               norm_kind: NormKind | str = NormKind.SPECTRAL) -> DesignResult:
    """Full synthesis pipeline for a plant's mode family.

    Per-mode gains by pole placement, Lyapunov certificates for each
    closed-loop matrix, min-max centers for the three families, and the
    two mismatch radii (to the centers, and pairwise).
    """
    norm_kind = NormKind.coerce(norm_kind)
    p, q = spec.p, spec.q
    if Q_list is None:
        Q_arr = np.stack([np.eye(q)] * p)
    else:
        Q_arr = np.stack([np.asarray(Q, dtype=float) for Q in Q_list])
        if Q_arr.shape != (p, q, q):
            raise ValueError(f"Q_list must contain {p} matrices of shape ({q}, {q})")

    K_rows = np.empty((p, q))
    S_arr = np.empty((p, q, q))
    for i in range(p):
        A_i, B_i = spec.A_list[i], spec.B_list[i]
        K_rows[i] = pole_place(A_i, B_i, poles)
        H_i = A_i + np.outer(B_i, K_rows[i])
        ok, absc = is_hurwitz(H_i)
        if not ok:
            raise ValueError(f"mode {i + 1}: closed loop not Hurwitz (abscissa {absc:.3g})")
        S_arr[i] = solve_lyapunov(H_i, Q_arr[i])

    A_bar, radius_A = chebyshev_center(list(spec.A_list), norm_kind)
    B_center, radius_B = chebyshev_center([b.reshape(-1, 1) for b in spec.B_list], norm_kind)
    K_center, radius_K = chebyshev_center([k.reshape(1, -1) for k in K_rows], norm_kind)

    eps = max(radius_A, radius_B, radius_K)
    eps_bar = max(_pairwise_max(spec.A_list, norm_kind),
                  _pairwise_max(spec.B_list.reshape(p, q, 1), norm_kind),
                  _pairwise_max(K_rows.reshape(p, 1, q), norm_kind))

    return DesignResult(
        A_list=spec.A_list.copy(), B_list=spec.B_list.copy(),
        K_list=K_rows, S_list=S_arr, Q_list=Q_arr,
        A_bar=A_bar, B_bar=B_center.reshape(-1), K_bar=K_center.reshape(-1),
        eps=eps, eps_bar=eps_bar,
        radius_A=radius_A, radius_B=radius_B, radius_K=radius_K,
        norm_kind=norm_kind)
