"""Dense phase-1 simplex for small linear feasibility problems.

Finds ``x >= 0`` with ``A x = b`` or reports that none exists. Bland's rule
keeps it from cycling on the degenerate vertices that Bell polytopes are full of.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

FEAS_TOL = 1e-9


class SimplexError(RuntimeError):
    """Pivoting did not terminate within the iteration budget."""


def feasible_point(A, b, tol: float = FEAS_TOL, max_iter: int = 10_000) -> Optional[np.ndarray]:
    """Return some ``x >= 0`` with ``A @ x == b`` (to ``tol``), or ``None``.

    Phase 1 only: artificial variables are driven out by minimising their sum.
    """
    A = np.array(A, dtype=float, ndmin=2)
    b = np.array(b, dtype=float).ravel()
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({m},)")

    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # tableau columns: n structural, m artificial, rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    # objective row holds reduced costs of min sum(artificials)
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))

    for _ in range(max_iter):
        costs = T[m, : n + m]
        entering = next((j for j in range(n + m) if costs[j] < -tol), None)
        if entering is None:
            break
        col = T[:m, entering]
        rows = [i for i in range(m) if col[i] > tol]
        if not rows:
            raise SimplexError("phase-1 objective unbounded")
        ratios = [T[i, -1] / col[i] for i in rows]
        best = min(ratios)
        leaving = min(
            (i for i, r in zip(rows, ratios) if r <= best + tol),
            key=lambda i: basis[i],
        )
        T[leaving] /= T[leaving, entering]
        for i in range(m + 1):
            if i != leaving and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leaving]
        basis[leaving] = entering
    else:
        raise SimplexError(f"no convergence after {max_iter} pivots")

    if -T[m, -1] > tol * max(1.0, float(b.sum())):
        return None
    x = np.zeros(n + m)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    x = np.clip(x[:n], 0.0, None)
    if np.max(np.abs(A @ x - b), initial=0.0) > 10 * tol:
        return None
    return x
