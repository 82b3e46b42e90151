"""Sparse kernels: CSR assembly, smoothed conjugate gradients, Uzawa-CG.

Operators are ``scipy.sparse.csr_matrix`` instances kept in canonical form
(sorted column indices, no duplicates, no stored zeros).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

SparseOperator = sp.csr_matrix


class SolverError(RuntimeError):
    pass


class NoConvergence(SolverError):
    def __init__(self, message: str, iterations: int, residual: float,
                 divergence_residual: Optional[float] = None):
        self.iterations = iterations
        self.residual = residual
        self.divergence_residual = divergence_residual
        extra = "" if divergence_residual is None else f", divergence {divergence_residual:.3e}"
        super().__init__(f"{message}: {iterations} iterations, residual {residual:.3e}{extra}")


@dataclass(frozen=True)
class SolveConfig:
    rel_tol: float = 1e-8
    max_iter: Optional[int] = None
    nullspace: str = "none"  # or "constants"

    def __post_init__(self) -> None:
        if not 0.0 < self.rel_tol <= 1e-2:
            raise ValueError(f"rel_tol {self.rel_tol} outside (0, 1e-2]")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.nullspace not in ("none", "constants"):
            raise ValueError(f"unknown nullspace {self.nullspace!r}")

    def iterations_for(self, unknowns: int) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return int(20 * math.sqrt(unknowns)) + 1000

    def with_(self, **kw) -> SolveConfig:
        d = dict(rel_tol=self.rel_tol, max_iter=self.max_iter, nullspace=self.nullspace)
        d.update(kw)
        return SolveConfig(**d)


def csr(rows, cols, vals, shape) -> sp.csr_matrix:
    """Assemble a canonical CSR matrix from COO triplets (duplicates summed)."""
    a = sp.coo_matrix((np.asarray(vals, dtype=float),
                       (np.asarray(rows), np.asarray(cols))), shape=shape).tocsr()
    a.sum_duplicates()
    a.eliminate_zeros()
    a.sort_indices()
    return a


def is_symmetric(a: sp.spmatrix, rtol: float = 1e-14) -> bool:
    diff = abs(a - a.T)
    scale = abs(a).max() if a.nnz else 0.0
    return diff.nnz == 0 or diff.max() <= rtol * scale


def spd_factor(a) -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU of a symmetric matrix with a symmetric fill-reducing ordering."""
    lu = splu(sp.csc_matrix(a), permc_spec="MMD_AT_PLUS_A",
              options=dict(SymmetricMode=True))
    return lu.solve


def _project(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def cg_solve(a, b: np.ndarray, cfg: SolveConfig = SolveConfig(),
             x0: Optional[np.ndarray] = None, stats: Optional[dict] = None) -> np.ndarray:
    """Conjugate gradients with minimal-residual smoothing.

    The smoothed iterate minimises the residual norm along the segment to
    each new CG iterate, so the reported residual history is monotone.  With
    ``nullspace="constants"`` the right side and all iterates are projected
    to mean zero; the removed mean is reported in ``stats["projection"]``.

    Raises NoConvergence if ``||a x - b|| <= rel_tol ||b||`` is not reached.
    """
    b = np.asarray(b, dtype=float)
    project = cfg.nullspace == "constants"
    if project:
        proj = float(b.mean()) * math.sqrt(b.size)
        b = _project(b)
        if stats is not None:
            stats["projection"] = abs(proj)
    bnorm = float(np.linalg.norm(b))
    maxit = cfg.iterations_for(b.size)
    history: list[float] = []
    if stats is not None:
        stats["history"] = history
    if bnorm == 0.0:
        if stats is not None:
            stats["iterations"] = 0
        return np.zeros_like(b)
    tol = cfg.rel_tol * bnorm
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if project:
        x = _project(x)
    it = 0
    while True:
        r = b - a @ x
        if project:
            r = _project(r)
        y, s = x.copy(), r.copy()
        snorm = float(np.linalg.norm(s))
        history.append(snorm)
        if snorm <= tol:
            break
        p = r.copy()
        rr = float(r @ r)
        while it < maxit:
            it += 1
            ap = a @ p
            pap = float(p @ ap)
            if not pap > 0.0:
                raise NoConvergence("conjugate gradients broke down", it, snorm / bnorm)
            alpha = rr / pap
            x += alpha * p
            r -= alpha * ap
            if project:
                r = _project(r)
            d = r - s
            dd = float(d @ d)
            if dd > 0.0:
                eta = -float(s @ d) / dd
                y += eta * (x - y)
                s += eta * d
            snorm = float(np.linalg.norm(s))
            history.append(snorm)
            if snorm <= tol:
                break
            rr_new = float(r @ r)
            p = r + (rr_new / rr) * p
            rr = rr_new
        # guard against drift of the recursive residual
        true_r = b - a @ y
        if project:
            true_r = _project(true_r)
        rnorm = float(np.linalg.norm(true_r))
        if rnorm <= tol:
            x = y
            break
        if it >= maxit:
            raise NoConvergence("conjugate gradients did not converge", it, rnorm / bnorm)
        x = y
    if stats is not None:
        stats["iterations"] = it
    if project:
        x = _project(x)
    return x


def stokes_saddle_solve(laplacian_u, divergence, rhs_u: np.ndarray,
                        cfg: SolveConfig = SolveConfig(),
                        inner: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                        p0: Optional[np.ndarray] = None, h: Optional[float] = None,
                        stats: Optional[dict] = None) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``A u - D^T p = f, D u = 0`` by Uzawa iteration with CG acceleration.

    ``A`` is the SPD negative velocity Laplacian and ``D`` the discrete
    divergence, so ``-D^T`` is the pressure gradient.  The outer loop is
    conjugate gradients on the pressure Schur complement ``D A^-1 D^T``
    (projected to mean zero); every application needs one inner solve with
    ``A``.  ``inner`` defaults to :func:`cg_solve`; callers holding a
    factorisation of ``A`` may pass its solve instead.

    Converged when ``||D u|| <= rel_tol ||f|| h``; ``p`` is returned with
    zero mean over the pressure unknowns.
    """
    f = np.asarray(rhs_u, dtype=float)
    D = divergence
    npres = D.shape[0]
    fnorm = float(np.linalg.norm(f))
    if h is None:
        h = 1.0 / float(abs(D).max()) if D.nnz else 1.0
    if fnorm == 0.0:
        if stats is not None:
            stats["iterations"] = 0
        return np.zeros_like(f), np.zeros(npres)
    if inner is None:
        inner_cfg = SolveConfig(rel_tol=max(cfg.rel_tol * 1e-3, 1e-13),
                                max_iter=cfg.max_iter)
        inner = lambda r: cg_solve(laplacian_u, r, inner_cfg)  # noqa: E731
    DT = D.T.tocsr()
    p = np.zeros(npres) if p0 is None else _project(np.array(p0, dtype=float))
    u = inner(f + DT @ p)
    res = _project(-(D @ u))
    tol = cfg.rel_tol * fnorm * h
    maxit = cfg.iterations_for(npres)
    it = 0
    rr = float(res @ res)
    s = res.copy()
    while math.sqrt(rr) > tol:
        if it >= maxit:
            raise NoConvergence("Uzawa iteration did not converge", it,
                                float(np.linalg.norm(laplacian_u @ u - DT @ p - f)) / fnorm,
                                math.sqrt(rr))
        it += 1
        w = inner(DT @ s)
        ss = D @ w
        sss = float(s @ ss)
        if not sss > 0.0:
            raise NoConvergence("Uzawa iteration broke down", it, float("nan"), math.sqrt(rr))
        alpha = rr / sss
        p += alpha * s
        u += alpha * w
        res = _project(res - alpha * ss)
        rr_new = float(res @ res)
        s = res + (rr_new / rr) * s
        rr = rr_new
    p = _project(p)
    u = inner(f + DT @ p)
    mom = float(np.linalg.norm(laplacian_u @ u - DT @ p - f))
    div = float(np.linalg.norm(D @ u))
    if stats is not None:
        stats.update(iterations=it, momentum_residual=mom, divergence_residual=div)
    if mom > cfg.rel_tol * fnorm or div > 10 * tol:
        raise NoConvergence("Uzawa solution fails residual check", it, mom / fnorm, div)
    return u, p
