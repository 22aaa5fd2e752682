"""Nelder-Mead minimization of many independent problems in lockstep.

Each row of the batch carries its own simplex and is advanced by the textbook
reflect / expand / contract / shrink rules. Rows never interact, so a row's
trajectory is the same whatever else is in the batch. Simulations rely on
that to get results that do not depend on chunking or worker count.
"""

import numpy as np

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5


def nelder_mead_batch(fun, x0, step=0.05, xatol=1e-10, maxfev=10_000):
    """Minimize ``fun`` independently for every row of ``x0``.

    Parameters
    ----------
    fun : callable
        ``fun(x, rows)`` evaluates the objective of problems ``rows`` (an
        index array) at points ``x`` of shape ``(len(rows), k)``.
    x0 : ndarray, shape (B, k)
        Starting points; the initial simplex adds ``step`` to each coordinate.
    xatol : float
        Stop a row once its simplex diameter (max-norm) drops below this.
    maxfev : int
        Per-row cap on objective evaluations.

    Returns
    -------
    x, fx, nfev, converged : ndarrays of shape (B, k), (B,), (B,), (B,)
    """
    x0 = np.asarray(x0, dtype=float)
    B, k = x0.shape
    allrows = np.arange(B)
    S = np.repeat(x0[:, None, :], k + 1, axis=1)
    for i in range(k):
        S[:, i + 1, i] += step
    F = np.empty((B, k + 1))
    for i in range(k + 1):
        F[:, i] = fun(S[:, i], allrows)
    nfev = np.full(B, k + 1, dtype=np.int64)
    converged = np.zeros(B, dtype=bool)
    active = allrows

    while active.size:
        order = np.argsort(F[active], axis=1, kind="stable")
        S[active] = np.take_along_axis(S[active], order[:, :, None], axis=1)
        F[active] = np.take_along_axis(F[active], order, axis=1)

        Sa = S[active]
        diam = np.max(np.abs(Sa[:, 1:] - Sa[:, :1]), axis=(1, 2))
        done = diam < xatol
        converged[active[done]] = True
        capped = ~done & (nfev[active] >= maxfev)
        active = active[~(done | capped)]
        if not active.size:
            break

        Sa = S[active]
        Fa = F[active]
        best = Fa[:, 0]
        second = Fa[:, k - 1]
        worst_f = Fa[:, k]
        xw = Sa[:, k]
        xbar = Sa[:, :k].mean(axis=1)

        xr = xbar + REFLECT * (xbar - xw)
        fr = fun(xr, active)
        nfev[active] += 1
        new_x = xr.copy()
        new_f = fr.copy()
        shrink = np.zeros(active.size, dtype=bool)

        expand = fr < best
        if expand.any():
            rows = np.flatnonzero(expand)
            xe = xbar[rows] + EXPAND * (xbar[rows] - xw[rows])
            fe = fun(xe, active[rows])
            nfev[active[rows]] += 1
            better = fe < fr[rows]
            new_x[rows[better]] = xe[better]
            new_f[rows[better]] = fe[better]

        outside = (fr >= second) & (fr < worst_f)
        if outside.any():
            rows = np.flatnonzero(outside)
            xc = xbar[rows] + CONTRACT * (xr[rows] - xbar[rows])
            fc = fun(xc, active[rows])
            nfev[active[rows]] += 1
            ok = fc <= fr[rows]
            new_x[rows[ok]] = xc[ok]
            new_f[rows[ok]] = fc[ok]
            shrink[rows[~ok]] = True

        inside = fr >= worst_f
        if inside.any():
            rows = np.flatnonzero(inside)
            xc = xbar[rows] + CONTRACT * (xw[rows] - xbar[rows])
            fc = fun(xc, active[rows])
            nfev[active[rows]] += 1
            ok = fc < worst_f[rows]
            new_x[rows[ok]] = xc[ok]
            new_f[rows[ok]] = fc[ok]
            shrink[rows[~ok]] = True

        keep = ~shrink
        S[active[keep], k] = new_x[keep]
        F[active[keep], k] = new_f[keep]

        if shrink.any():
            srows = active[shrink]
            Ss = S[srows]
            Ss[:, 1:] = Ss[:, :1] + SHRINK * (Ss[:, 1:] - Ss[:, :1])
            S[srows] = Ss
            for i in range(1, k + 1):
                F[srows, i] = fun(Ss[:, i], srows)
            nfev[srows] += k

    best_idx = np.argmin(F, axis=1)
    x = S[allrows, best_idx]
    fx = F[allrows, best_idx]
    return x, fx, nfev, converged
