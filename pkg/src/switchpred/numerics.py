"""Dense small-matrix kernels shared by every other module.

Everything here operates on plain ``numpy`` arrays of ``float64``.  The
routines are deliberately self-contained (no scipy at runtime) so the rest
of the package depends on one set of numerics whose accuracy contracts are
pinned by the tests.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

__all__ = [
    "NormKind",
    "expm",
    "zoh_discretize",
    "solve_lyapunov",
    "pole_place",
    "induced_norm",
    "is_hurwitz",
    "controllability_matrix",
]


class NormKind(Enum):
    """Matrix norm used for all mismatch / margin computations."""

    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"

    @classmethod
    def coerce(cls, kind: "NormKind | str") -> "NormKind":
        if isinstance(kind, NormKind):
            return kind
        try:
            return cls(str(kind).strip().lower())
        except ValueError:
            raise ValueError(f"unknown norm kind: {kind!r}") from None


def _as_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _as_square(M, name: str = "matrix") -> np.ndarray:
    M = _as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


# Pade-13 coefficients for the scaling-and-squaring exponential.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_PADE13_THETA = 5.371920351148152


def expm(M) -> np.ndarray:
    """Matrix exponential via scaling-and-squaring with a fixed [13/13] Pade core.

    Accurate to ~1e-12 relative for ``norm(M) <= 50`` (and usually much
    better); raises on non-square or non-finite input.
    """
    A = _as_square(M, "expm input")
    n = A.shape[0]
    norm1 = float(np.linalg.norm(A, 1))
    s = 0
    if norm1 > _PADE13_THETA:
        s = int(np.ceil(np.log2(norm1 / _PADE13_THETA)))
        A = A / (2.0**s)

    b = _PADE13
    I = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I)
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


def zoh_discretize(A, B, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization of ``xdot = A x + B u``.

    Returns ``(Ad, Bd)`` with ``Ad = exp(A dt)`` and
    ``Bd = int_0^dt exp(A s) ds @ B``, computed through the exponential of
    the augmented block ``[[A, B], [0, 0]] * dt`` so ``A`` does not need to
    be invertible.  ``B`` may be a vector ``(q,)`` or a matrix ``(q, m)``;
    ``Bd`` comes back in the same shape.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A = _as_square(A, "A")
    B_in = np.asarray(B, dtype=float)
    vector_b = B_in.ndim == 1
    Bm = _as_matrix(B_in, "B")
    q = A.shape[0]
    if Bm.shape[0] != q:
        raise ValueError(f"B has {Bm.shape[0]} rows, expected {q}")
    m = Bm.shape[1]
    blk = np.zeros((q + m, q + m))
    blk[:q, :q] = A
    blk[:q, q:] = Bm
    E = expm(blk * dt)
    Ad = E[:q, :q]
    Bd = E[:q, q:]
    if vector_b:
        Bd = Bd[:, 0]
    return Ad, Bd


def solve_lyapunov(H, Q, residual_tol: float = 1e-9) -> np.ndarray:
    """Solve ``H.T S + S H = -Q`` for symmetric positive-definite ``S``.

    ``H`` must be Hurwitz and ``Q`` symmetric positive definite.  Small
    systems only: the equation is vectorized through a Kronecker product,
    capped at ``n <= 32``.
    """
    H = _as_square(H, "H")
    Q = _as_square(Q, "Q")
    n = H.shape[0]
    if Q.shape[0] != n:
        raise ValueError("H and Q must have matching dimensions")
    if n > 32:
        raise ValueError(f"Kronecker Lyapunov solve capped at n <= 32, got n = {n}")
    if not np.allclose(Q, Q.T, atol=1e-12):
        raise ValueError("Q must be symmetric")
    if np.min(np.linalg.eigvalsh(Q)) <= 0:
        raise ValueError("Q must be positive definite")
    hurwitz, abscissa = is_hurwitz(H)
    if not hurwitz:
        raise ValueError(f"H is not Hurwitz (spectral abscissa {abscissa:.6g})")

    # vec(H^T S) + vec(S H) = (I (x) H^T + H^T (x) I) vec(S), column-major vec.
    I = np.eye(n)
    L = np.kron(I, H.T) + np.kron(H.T, I)
    S = np.linalg.solve(L, -Q.reshape(-1, order="F")).reshape((n, n), order="F")
    S = 0.5 * (S + S.T)

    residual = float(np.linalg.norm(H.T @ S + S @ H + Q, 2))
    if residual > residual_tol:
        raise ValueError(f"Lyapunov residual {residual:.3e} exceeds {residual_tol:.1e}")
    if np.min(np.linalg.eigvalsh(S)) <= 0:
        raise ValueError("Lyapunov solve produced a non positive-definite S")
    return S


def controllability_matrix(A, b) -> np.ndarray:
    """Single-input controllability matrix ``[b, Ab, ..., A^(n-1) b]``."""
    A = _as_square(A, "A")
    b = np.asarray(b, dtype=float).reshape(-1)
    n = A.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"b has length {b.shape[0]}, expected {n}")
    cols = np.empty((n, n))
    v = b.copy()
    for j in range(n):
        cols[:, j] = v
        v = A @ v
    return cols


def pole_place(A, b, poles) -> np.ndarray:
    """Single-input pole placement via Ackermann's formula.

    Returns the row gain ``k`` (shape ``(n,)``) such that ``A + b k`` has
    the requested eigenvalues.  Poles may be complex but must be closed
    under conjugation; the pair ``(A, b)`` must be controllable.
    """
    A = _as_square(A, "A")
    b_in = np.asarray(b, dtype=float)
    b_vec = b_in.reshape(-1)
    n = A.shape[0]
    if b_vec.shape[0] != n:
        raise ValueError(f"b has length {b_vec.shape[0]}, expected {n}")
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    if poles.shape[0] != n:
        raise ValueError(f"expected {n} poles, got {poles.shape[0]}")

    # conjugate closure: the sorted multiset must equal its own conjugate
    key = lambda z: (round(z.real, 9), round(z.imag, 9))
    if sorted(map(key, poles)) != sorted(map(key, np.conj(poles))):
        raise ValueError("complex poles must come in conjugate pairs")

    C = controllability_matrix(A, b_vec)
    if np.linalg.matrix_rank(C) < n:
        raise ValueError("uncontrollable pair: controllability matrix is rank deficient")

    # phi(A) for the monic polynomial with the requested roots
    coeffs = np.real(np.poly(poles))
    phi = np.zeros_like(A)
    for c in coeffs:
        phi = phi @ A + c * np.eye(n)
    # last row of C^-1 applied to phi(A); convention A + b k (not A - b k)
    e_last = np.zeros(n)
    e_last[-1] = 1.0
    row = np.linalg.solve(C.T, e_last)
    return -(row @ phi)


def induced_norm(M, kind: NormKind | str = NormKind.SPECTRAL,
                 rel_tol: float = 1e-10, max_iter: int = 20000) -> float:
    """Matrix norm: spectral (largest singular value) or Frobenius.

    The spectral branch runs a deterministic power iteration on ``M.T M``
    until the Rayleigh estimate is stable to ``rel_tol`` relative.
    """
    kind = NormKind.coerce(kind)
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if M.ndim == 0:
        return abs(float(M))
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if kind is NormKind.FROBENIUS:
        return float(np.sqrt(np.sum(M * M)))

    G = M.T @ M
    n = G.shape[0]
    # deterministic, not axis-aligned start
    v = 1.0 + np.arange(n) / max(n, 1)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ (G @ v))
        if abs(lam_new - lam) <= rel_tol * max(lam_new, 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def is_hurwitz(M) -> tuple[bool, float]:
    """Whether all eigenvalues have negative real part, plus the spectral abscissa."""
    M = _as_square(M, "matrix")
    abscissa = float(np.max(np.linalg.eigvals(M).real))
    return abscissa < 0.0, abscissa
