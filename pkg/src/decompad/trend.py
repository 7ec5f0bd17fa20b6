"""Robust trend extraction.

Solves

    minimize  sum_t |y_t - tau_t| + lam1 * sum_t |tau_t - tau_{t-1}|
                                  + lam2 * sum_t |tau_{t+1} - 2 tau_t + tau_{t-1}|

written as a weighted least-absolute-deviation problem
``min sum_i w_i |(A tau - b)_i|`` with ``A = [I; D1; D2]`` and ``b = [y; 0; 0]``.

Two solvers share the banded structure of ``A^T A``:

* ADMM, which accepts a warm start and is used for streaming re-solves. Its
  iterate is periodically polished on the rows driven to zero, and a dual
  certificate is built from the scaled multipliers.
* A primal-dual interior-point method on the box-constrained dual
  ``min b^T mu  s.t.  A^T mu = 0, |mu| <= w``, used for cold solves and to
  finish ADMM runs that exhaust their iteration budget.

Both stop on a certified duality gap ``objective - lower_bound``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded


class SolverError(RuntimeError):
    """The duality gap could not be closed within the iteration budget."""

    def __init__(self, message: str, objective: float, gap: float, trend: np.ndarray):
        super().__init__(f"{message} (objective={objective:.6g}, gap={gap:.3g})")
        self.objective = objective
        self.gap = gap
        self.trend = trend


@dataclass
class WarmStart:
    """Primal iterate and unscaled dual multipliers (one per row of ``A``)."""
    x: np.ndarray
    mu: np.ndarray

    def __len__(self):
        return self.x.size


@dataclass
class TrendResult:
    trend: np.ndarray
    objective: float
    lower_bound: float
    iterations: int
    method: str
    warm: WarmStart
    admm_iterations: int = 0

    @property
    def gap(self) -> float:
        return self.objective - self.lower_bound


def difference_operator(n: int) -> sparse.csr_matrix:
    """Stacked ``[I; D1; D2]`` with shape ``(3n-3, n)``."""
    e = np.ones(n)
    d1 = sparse.diags([-e[:-1], e[:-1]], [0, 1], shape=(n - 1, n))
    d2 = sparse.diags([e[:-2], -2 * e[:-2], e[:-2]], [0, 1, 2], shape=(n - 2, n))
    return sparse.vstack([sparse.identity(n), d1, d2]).tocsr()


def trend_objective(y, tau, lam1: float, lam2: float) -> float:
    y = np.asarray(y, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    return float(np.abs(y - tau).sum() + lam1 * np.abs(np.diff(tau)).sum()
                 + lam2 * np.abs(np.diff(tau, 2)).sum())


def _apply(x: np.ndarray) -> np.ndarray:
    """``[I; D1; D2] @ x``."""
    d1 = x[1:] - x[:-1]
    return np.concatenate([x, d1, d1[1:] - d1[:-1]])


def _apply_t(v: np.ndarray, n: int) -> np.ndarray:
    """``[I; D1; D2]^T @ v``."""
    v1, v2 = v[n:2 * n - 1], v[2 * n - 1:]
    out = v[:n].copy()
    out[1:] += v1
    out[:-1] -= v1
    out[:-2] += v2
    out[1:-1] -= 2 * v2
    out[2:] += v2
    return out


def _gram(d: np.ndarray, n: int, ridge: float = 0.0) -> np.ndarray:
    """Upper banded form of ``A^T diag(d) A`` (pentadiagonal)."""
    d0, d1, d2 = d[:n], d[n:2 * n - 1], d[2 * n - 1:]
    main = d0 + ridge
    main = main.copy()
    up1 = np.zeros(n - 1)
    up2 = np.zeros(n - 2)
    main[:-1] += d1
    main[1:] += d1
    up1 -= d1
    main[:-2] += d2
    main[1:-1] += 4 * d2
    main[2:] += d2
    up1[:-1] -= 2 * d2
    up1[1:] -= 2 * d2
    up2 += d2
    ab = np.zeros((3, n))
    ab[2] = main
    ab[1, 1:] = up1
    ab[0, 2:] = up2
    return ab


@dataclass(frozen=True)
class _Problem:
    n: int
    w: np.ndarray             # row weights
    s: np.ndarray             # ADMM row scaling (w, or 1 on zero-weight rows)
    keep: np.ndarray          # rows with positive weight
    chol: np.ndarray          # banded Cholesky of A^T diag(s^2) A
    chol_keep: np.ndarray     # banded Cholesky of A^T diag(keep) A


@lru_cache(maxsize=16)
def _problem(n: int, lam1: float, lam2: float) -> _Problem:
    w = np.concatenate([np.ones(n), np.full(n - 1, lam1), np.full(n - 2, lam2)])
    s = np.where(w > 0, w, 1.0)
    keep = w > 0
    return _Problem(n, w, s, keep, cholesky_banded(_gram(s * s, n)),
                    cholesky_banded(_gram(keep.astype(float), n)))


def _objective(p: _Problem, x: np.ndarray, b0: np.ndarray) -> float:
    return float(np.abs(p.w * (_apply(x) - b0)).sum())


def _dual_bound(p: _Problem, mu: np.ndarray, b0: np.ndarray) -> float:
    """Lower bound from any multiplier estimate: project onto ``A^T mu = 0``, scale into the box."""
    k = p.keep.astype(float)
    mu = k * mu
    mu = mu - k * _apply(cho_solve_banded((p.chol_keep, False), _apply_t(mu, p.n)))
    return max(0.0, _certify(p, mu, b0))


def _certify(p: _Problem, mu: np.ndarray, b0: np.ndarray) -> float:
    """``-b^T mu`` after scaling ``mu`` into the box; 0 if ``A^T mu = 0`` fails."""
    big = np.abs(mu).max()
    if big == 0.0 or np.abs(_apply_t(mu, p.n)).max() > 1e-9 * big:
        return 0.0
    nz = np.abs(mu) > 0
    if np.any(nz & ~p.keep):
        return 0.0
    scale = min(1.0, float(np.min(p.w[nz] / np.abs(mu[nz]))))
    return float(-(b0 @ mu) * scale)


def solve_trend(y, lam1: float = 1.0, lam2: float = 3.0, *,
                warm: Optional[WarmStart] = None, method: str = "auto",
                rho: float = 1.0, alpha: float = 1.6, tol_abs: float = 1e-6,
                tol_rel: float = 1e-6, max_iter: int = 2000,
                fallback: bool = True) -> TrendResult:
    """Minimise the LAD + first/second-difference objective.

    Parameters
    ----------
    y : array_like
        Series to fit, length >= 3.
    lam1, lam2 : float
        Weights of the first- and second-difference penalties.
    warm : WarmStart, optional
        Previous solution of the same length (see :func:`shift_warm_start`).
    method : {"auto", "admm", "ipm"}
        ``auto`` uses ADMM when a warm start is given and the interior-point
        method otherwise.
    max_iter : int
        ADMM iteration budget. When it runs out and ``fallback`` is set, the
        interior-point method finishes the solve.
    tol_abs, tol_rel : float
        Stop once ``objective - lower_bound <= max(tol_abs, tol_rel * objective)``.

    Raises
    ------
    SolverError
        If no method closes the gap.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if n < 3:
        raise ValueError(f"trend extraction needs at least 3 points, got {n}")
    if lam1 < 0 or lam2 < 0:
        raise ValueError("penalty weights must be non-negative")
    if not np.all(np.isfinite(y)):
        raise ValueError("trend input contains non-finite values")
    if method not in ("auto", "admm", "ipm"):
        raise ValueError(f"unknown method {method!r}")
    p = _problem(n, float(lam1), float(lam2))
    if warm is not None and len(warm) != n:
        warm = None
    if method == "auto":
        method = "admm" if warm is not None else "ipm"

    # the objective is translation invariant and positively homogeneous, and
    # the multipliers are scale free, so solve on a standardised copy
    shift = float(np.median(y))
    scale = float(np.std(y))
    if scale <= 1e-300:
        scale = 1.0
    ys = (y - shift) / scale
    if warm is not None:
        warm = WarmStart((warm.x - shift) / scale, warm.mu)
    if method == "ipm":
        res = _ipm(p, ys, tol_abs, tol_rel)
    else:
        try:
            res = _admm(p, ys, warm, rho, alpha, tol_abs, tol_rel, max_iter)
        except SolverError as err:
            if not fallback:
                raise SolverError(str(err).split(" (")[0], err.objective * scale,
                                  err.gap * scale, err.trend * scale + shift) from None
            res = _ipm(p, ys, tol_abs, tol_rel)
            res.admm_iterations = max_iter
            if err.objective < res.objective:
                res.trend, res.objective = err.trend, err.objective
    res.trend = res.trend * scale + shift
    res.objective *= scale
    res.lower_bound *= scale
    res.warm = WarmStart(res.trend, res.warm.mu)
    return res


def _admm(p: _Problem, y, warm, rho, alpha, tol_abs, tol_rel, max_iter,
          check_every: int = 20) -> TrendResult:
    n = y.size
    b0 = np.concatenate([y, np.zeros(2 * n - 3)])
    b = p.s * b0
    thr = np.where(p.w > 0, 1.0 / rho, 0.0)
    if warm is not None:
        x = warm.x.copy()
        u = warm.mu / (rho * p.s)
    else:
        x, u = y.copy(), np.zeros(3 * n - 3)
    z = p.s * _apply(x) - b
    best, fbest = x.copy(), _objective(p, x, b0)
    lower = 0.0
    it = 0
    if warm is not None:
        # a warm start usually keeps most of its active set; refit on it first
        active = (np.abs(_apply(x) - b0) <= 1e-7 * (1.0 + np.abs(b0))) & p.keep
        xp, lb = _polish(p, x, active, warm.mu, b0)
        if xp is not None:
            fp = _objective(p, xp, b0)
            if fp < fbest:
                best, fbest = xp, fp
        lower = max(lower, min(lb, fbest))
    while fbest - lower > max(tol_abs, tol_rel * fbest):
        if it >= max_iter:
            raise SolverError(f"ADMM did not converge in {max_iter} iterations",
                              fbest, fbest - lower, best)
        it += 1
        x = cho_solve_banded((p.chol, False), _apply_t(p.s * (b + z - u), n))
        ax = p.s * _apply(x)
        axh = alpha * ax + (1.0 - alpha) * (z + b)
        v = axh - b + u
        z = np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)
        u = u + axh - b - z
        if it % check_every == 0:
            fx = _objective(p, x, b0)
            if fx < fbest:
                best, fbest = x.copy(), fx
            xp, lb = _polish(p, x, (z == 0.0) & (p.w > 0), rho * u * p.s, b0)
            if xp is not None:
                fp = _objective(p, xp, b0)
                if fp < fbest:
                    best, fbest = xp, fp
            lower = max(lower, min(lb, fbest))
    return TrendResult(best, fbest, lower, it, "admm", WarmStart(best, rho * u * p.s), it)


def _polish(p: _Problem, x, active, mu, b0) -> Tuple[Optional[np.ndarray], float]:
    """Refit on a guessed active set and certify with the matching dual."""
    n = p.n
    if not active.any():
        return None, 0.0
    m = active.astype(float)
    ridge = 1e-10
    try:
        chol = cholesky_banded(_gram(m, n, ridge))
    except LinAlgError:
        return None, 0.0
    xp = cho_solve_banded((chol, False), _apply_t(m * b0, n) + ridge * x)

    # off the active set the multiplier is pinned to w*sign(r); on it, project
    r = _apply(xp) - b0
    fixed = np.where(active, 0.0, p.w * np.sign(r))
    eta = m * mu
    corr = cho_solve_banded((chol, False), -_apply_t(fixed + eta, n))
    full = fixed + m * (eta + _apply(corr))
    return xp, _certify(p, full, b0)


def _ipm(p: _Problem, y, tol_abs, tol_rel, max_iter: int = 200) -> TrendResult:
    """Mehrotra predictor-corrector on the box-constrained dual.

    Rows with zero weight carry no multiplier and are dropped.
    """
    n = p.n
    b0 = np.concatenate([y, np.zeros(2 * n - 3)])
    keep = p.keep
    w = p.w[keep]
    b = b0[keep]
    m = w.size

    def A(v):
        return _apply(v)[keep]

    def At(v):
        full = np.zeros(3 * n - 3)
        full[keep] = v
        return _apply_t(full, n)

    def gram(d):
        full = np.zeros(3 * n - 3)
        full[keep] = d
        return _gram(full, n)

    x = y.copy()
    mu = np.zeros(m)
    su, sl = w.copy(), w.copy()
    r = A(x) - b
    lu = np.maximum(r, 0.0) + 1e-2 * w + 1e-3
    ll = np.maximum(-r, 0.0) + 1e-2 * w + 1e-3
    bnorm = 1.0 + np.linalg.norm(b)

    def max_step(pairs):
        step = 1.0
        for v, dv in pairs:
            neg = dv < 0
            if neg.any():
                step = min(step, float(np.min(-v[neg] / dv[neg])))
        return step

    lower = 0.0
    best = x.copy()
    fbest = _objective(p, x, b0)
    full = np.zeros(3 * n - 3)
    for it in range(1, max_iter + 1):
        rd = b - A(x) + lu - ll
        req = At(mu)
        ru = w - mu - su
        rl = w + mu - sl
        comp = lu @ su + ll @ sl
        dinv = 1.0 / (lu / su + ll / sl)
        mat = gram(dinv)
        mat[2] += 1e-14 * mat[2].max()
        try:
            chol = cholesky_banded(mat)
        except LinAlgError:
            break

        def newton(rcu, rcl):
            rcu = rcu - lu * ru
            rcl = rcl - ll * rl
            h = -rd - rcu / su + rcl / sl
            dx = cho_solve_banded((chol, False), -req - At(h * dinv))
            dmu = (A(dx) + h) * dinv
            dlu = (rcu + lu * dmu) / su
            dll = (rcl - ll * dmu) / sl
            return dx, dmu, ru - dmu, rl + dmu, dlu, dll

        dx, dmu, dsu, dsl, dlu, dll = newton(-lu * su, -ll * sl)
        step = max_step([(su, dsu), (sl, dsl), (lu, dlu), (ll, dll)])
        aff = (lu + step * dlu) @ (su + step * dsu) + (ll + step * dll) @ (sl + step * dsl)
        sigma = (aff / comp) ** 3
        target = sigma * comp / (2 * m)
        dx, dmu, dsu, dsl, dlu, dll = newton(target - lu * su - dlu * dsu,
                                             target - ll * sl - dll * dsl)
        step = min(1.0, 0.99 * max_step([(su, dsu), (sl, dsl), (lu, dlu), (ll, dll)]))
        x += step * dx
        mu += step * dmu
        su += step * dsu
        sl += step * dsl
        lu += step * dlu
        ll += step * dll

        f = _objective(p, x, b0)
        if f < fbest:
            best, fbest = x.copy(), f
        full = np.zeros(3 * n - 3)
        full[keep] = mu
        # the certificate costs a solve; only build it once the
        # complementarity gap says we are close
        if lu @ su + ll @ sl <= 10 * max(tol_abs, tol_rel * fbest):
            lower = max(lower, min(_dual_bound(p, full, b0), fbest))
        if fbest - lower <= max(tol_abs, tol_rel * fbest) and np.linalg.norm(rd) <= 1e-6 * bnorm:
            # snap to the nearby vertex so later warm starts see a clean active set
            active = (np.abs(_apply(best) - b0) <= 1e-7 * (1.0 + np.abs(b0))) & p.keep
            xp, lb = _polish(p, best, active, full, b0)
            if xp is not None and _objective(p, xp, b0) <= fbest:
                best, fbest = xp, _objective(p, xp, b0)
                lower = max(lower, min(lb, fbest))
            return TrendResult(best, fbest, lower, it, "ipm", WarmStart(best, full))
    raise SolverError("interior-point method did not converge", fbest, fbest - lower, best)


def shift_warm_start(warm: WarmStart, drop: int, n_new: int) -> WarmStart:
    """Re-align a warm start after dropping ``drop`` leading points and appending new ones.

    The trend is extended by holding its last first difference; multiplier
    blocks are shifted with the data and padded with zeros.
    """
    n_old = warm.x.size
    x = warm.x[drop:]
    add = n_new - x.size
    if add < 0:
        raise ValueError("new length shorter than the retained window")
    step = x[-1] - x[-2] if x.size >= 2 else 0.0
    x = np.concatenate([x, x[-1] + step * np.arange(1, add + 1)])
    blocks = np.split(warm.mu, [n_old, 2 * n_old - 1])
    sizes = (n_new, n_new - 1, n_new - 2)
    mu = []
    for blk, size in zip(blocks, sizes):
        blk = blk[drop:][:size]
        mu.append(np.concatenate([blk, np.zeros(size - blk.size)]))
    return WarmStart(x, np.concatenate(mu))
