"""One-sided Jacobi singular value decomposition for small dense matrices."""

import numpy as np

from .errors import NumericError

_EPS = np.finfo(np.float64).eps


def _round_robin(n):
    """Yield rounds of disjoint column pairs covering every pair once.

    Classic tournament schedule: slot 0 stays put while the others rotate.
    An odd ``n`` gets a dummy slot (-1) whose pairings are dropped.
    """
    slots = list(range(n)) + ([-1] if n % 2 else [])
    k = len(slots)
    for _ in range(k - 1):
        p, q = [], []
        for i in range(k // 2):
            a, b = slots[i], slots[k - 1 - i]
            if a >= 0 and b >= 0:
                p.append(min(a, b))
                q.append(max(a, b))
        yield np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)
        slots = [slots[0]] + [slots[-1]] + slots[1:-1]


def _complete_basis(U, keep):
    """Replace columns of ``U`` not in ``keep`` by an orthonormal completion."""
    m, k = U.shape
    basis = [U[:, j] for j in range(k) if keep[j]]
    cand = iter(np.eye(m))
    for j in range(k):
        if keep[j]:
            continue
        while True:
            v = next(cand).copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nrm = np.linalg.norm(v)
            if nrm > 1e-8:
                break
        v /= nrm
        U[:, j] = v
        basis.append(v)
    return U


def svd(M, max_sweeps=80):
    """Thin SVD ``M = U @ diag(s) @ Vt`` with ``s`` non-negative and descending.

    Uses Hestenes' one-sided Jacobi rotations, applied one round-robin round
    of disjoint column pairs at a time.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise NumericError(f"svd expects a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericError("svd input contains NaN or Inf")
    m, n = M.shape
    if m < n:
        U, s, Vt = svd(M.T, max_sweeps)
        return Vt.T, s, U.T
    A = M.copy()
    V = np.eye(n)
    tol = max(m, 1) * _EPS
    rounds = list(_round_robin(n)) if n > 1 else []
    for _ in range(max_sweeps):
        worst = 0.0
        for p, q in rounds:
            if p.size == 0:
                continue
            ap, aq = A[:, p], A[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            scale = np.sqrt(alpha * beta)
            active = (scale > 0) & (np.abs(gamma) > tol * scale)
            if not active.any():
                continue
            worst = max(worst, float(np.max(np.abs(gamma[active]) / scale[active])))
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            A[:, p], A[:, q] = c * ap - s * aq, s * ap + c * aq
            vp, vq = V[:, p], V[:, q]
            V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
        if worst <= tol:
            break
    else:
        raise NumericError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sing = np.linalg.norm(A, axis=0)
    order = np.argsort(-sing, kind="stable")
    sing, A, V = sing[order], A[:, order], V[:, order]
    cutoff = (sing[0] if sing.size else 0.0) * max(m, n) * _EPS
    keep = sing > cutoff
    U = np.zeros((m, n))
    U[:, keep] = A[:, keep] / sing[keep]
    if not keep.all():
        U = _complete_basis(U, keep)
        sing = np.where(keep, sing, 0.0)
    return U, sing, V.T
