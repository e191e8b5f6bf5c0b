"""Pure-Python integration kernel.

Reference arithmetic for the compiled ``_ckernel``: every floating-point
operation happens in the same order in both, so the two backends agree bit
for bit. Keep them in sync.

Modes: 0 = saddle-point dynamics, 1 = projected saddle-point-like dynamics.
Status: 0 = ran to the step budget, 1 = residual below ``tol``, 2 = non-finite state.
"""
import math


def run(mode, dt, nsteps, record_every, tol, act_rel, snap, mu, kappa,
        rowptr, rowcol, rowval, colptr, colrow, colval, b,
        w1, w4, cp, cm, bptr, bval,
        x0, lam0, have_ref, xs, ls, fstar,
        T, X, LAM, V, WV, RES, MG, PA):
    n = len(x0)
    p = len(lam0)
    rowptr = [int(v) for v in rowptr]
    rowcol = [int(v) for v in rowcol]
    colptr = [int(v) for v in colptr]
    colrow = [int(v) for v in colrow]
    bptr = [int(v) for v in bptr]
    rowval = [float(v) for v in rowval]
    colval = [float(v) for v in colval]
    b = [float(v) for v in b]
    w1 = [float(v) for v in w1]
    w4 = [float(v) for v in w4]
    cp = [float(v) for v in cp]
    cm = [float(v) for v in cm]
    bval = [float(v) for v in bval]
    xs = [float(v) for v in xs]
    ls = [float(v) for v in ls]
    x = [float(v) for v in x0]
    lam = [float(v) for v in lam0]
    h = [0.0] * p
    vel = [0.0] * n
    xn = [0.0] * n

    inv_mu = 1.0 / mu
    half_inv_mu = 0.5 * inv_mu
    kappa_bound = 0.0
    nrec = 0
    status = 0
    k = 0
    while True:
        # equality residual h = A x - b
        for l in range(p):
            s = 0.0
            for q in range(rowptr[l], rowptr[l + 1]):
                s += rowval[q] * x[rowcol[q]]
            h[l] = s - b[l]
        res2 = 0.0
        proj = 0
        for i in range(n):
            c = 0.0
            for q in range(colptr[i], colptr[i + 1]):
                l = colrow[q]
                c += colval[q] * (h[l] * inv_mu + lam[l])
            xi = x[i]
            qc = cp[i] if xi >= 0.0 else cm[i]
            d = c + (w4[i] * xi * xi * xi + qc * xi)
            if xi > 0.0:
                lo = d + w1[i]
                hi = lo
            elif xi < 0.0:
                lo = d - w1[i]
                hi = lo
            else:
                lo = d - w1[i]
                hi = d + w1[i]
            if mode == 0:
                for q in range(bptr[i], bptr[i + 1]):
                    u = bval[q]
                    if xi > u:
                        lo += kappa
                        hi += kappa
                    elif xi == u:
                        hi += kappa
            if lo > 0.0:
                sel = lo
            elif hi < 0.0:
                sel = hi
            else:
                sel = 0.0
            v = -sel
            if mode == 1 and v > 0.0:
                eps = act_rel * (1.0 + abs(xi))
                active = False
                for q in range(bptr[i], bptr[i + 1]):
                    if abs(xi - bval[q]) <= eps:
                        active = True
                if active:
                    if v > kappa_bound:
                        kappa_bound = v
                    v = 0.0
                    proj = 1
            vel[i] = v
            res2 += v * v
        for l in range(p):
            res2 += h[l] * h[l]
        res = math.sqrt(res2)
        converged = tol > 0.0 and res < tol
        last = k == nsteps
        if k % record_every == 0 or converged or last:
            T[nrec] = k * dt
            for i in range(n):
                X[nrec, i] = x[i]
            for l in range(p):
                LAM[nrec, l] = lam[l]
            RES[nrec] = res
            PA[nrec] = proj
            mg = -math.inf
            pen = 0.0
            fx = 0.0
            for i in range(n):
                xi = x[i]
                qc = cp[i] if xi >= 0.0 else cm[i]
                fx += w1[i] * abs(xi) + 0.25 * w4[i] * xi * xi * xi * xi + 0.5 * qc * xi * xi
                for q in range(bptr[i], bptr[i + 1]):
                    gv = xi - bval[q]
                    if gv > mg:
                        mg = gv
                    if gv > 0.0:
                        pen += gv
            MG[nrec] = mg
            if have_ref:
                hh = 0.0
                lh = 0.0
                dd = 0.0
                for l in range(p):
                    hh += h[l] * h[l]
                    lh += lam[l] * h[l]
                    e = lam[l] - ls[l]
                    dd += e * e
                for i in range(n):
                    e = x[i] - xs[i]
                    dd += e * e
                WV[nrec] = 0.5 * dd
                V[nrec] = fx - fstar + half_inv_mu * hh + lh + kappa * pen + 0.5 * dd
            else:
                WV[nrec] = math.nan
                V[nrec] = math.nan
            nrec += 1
        if converged:
            status = 1
            break
        if last:
            break

        finite = True
        for i in range(n):
            xi = x[i]
            y = xi + dt * vel[i]
            if snap:
                if y > xi:
                    if w1[i] > 0.0 and xi < 0.0 < y:
                        y = 0.0
                    if mode == 0:
                        for q in range(bptr[i], bptr[i + 1]):
                            u = bval[q]
                            if xi < u < y:
                                y = u
                elif y < xi:
                    if w1[i] > 0.0 and y < 0.0 < xi:
                        y = 0.0
                    if mode == 0:
                        for q in range(bptr[i], bptr[i + 1]):
                            u = bval[q]
                            if y < u < xi:
                                y = u
            if mode == 1:
                for q in range(bptr[i], bptr[i + 1]):
                    if y > bval[q]:
                        y = bval[q]
            if not math.isfinite(y):
                finite = False
            xn[i] = y
        for l in range(p):
            lam[l] = lam[l] + dt * h[l]
            if not math.isfinite(lam[l]):
                finite = False
        x, xn = xn, x
        k += 1
        if not finite:
            status = 2
            T[nrec] = k * dt
            for i in range(n):
                X[nrec, i] = x[i]
            for l in range(p):
                LAM[nrec, l] = lam[l]
            RES[nrec] = math.nan
            V[nrec] = math.nan
            WV[nrec] = math.nan
            MG[nrec] = math.nan
            PA[nrec] = 0
            nrec += 1
            break
    return nrec, status, kappa_bound, k
