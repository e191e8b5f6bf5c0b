# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernel.

Mirrors ``_pykernel.run`` operation for operation; see that module for the
argument contract. Built with FP contraction disabled so both backends
produce identical doubles.
"""
from libc.math cimport sqrt, fabs, isfinite, INFINITY, NAN

import numpy as np


def run(int mode, double dt, Py_ssize_t nsteps, Py_ssize_t record_every, double tol,
        double act_rel, bint snap, double mu, double kappa,
        const Py_ssize_t[::1] rowptr, const Py_ssize_t[::1] rowcol, const double[::1] rowval,
        const Py_ssize_t[::1] colptr, const Py_ssize_t[::1] colrow, const double[::1] colval,
        const double[::1] b,
        const double[::1] w1, const double[::1] w4, const double[::1] cp, const double[::1] cm,
        const Py_ssize_t[::1] bptr, const double[::1] bval,
        const double[::1] x0, const double[::1] lam0,
        bint have_ref, const double[::1] xs, const double[::1] ls, double fstar,
        double[::1] T, double[:, ::1] X, double[:, ::1] LAM, double[::1] V, double[::1] WV,
        double[::1] RES, double[::1] MG, unsigned char[::1] PA):
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t p = lam0.shape[0]
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] xn = np.empty(n, dtype=np.float64)
    cdef double[::1] lam = np.array(lam0, dtype=np.float64)
    cdef double[::1] h = np.zeros(p, dtype=np.float64)
    cdef double[::1] vel = np.zeros(n, dtype=np.float64)
    cdef double[::1] tmp
    cdef double inv_mu = 1.0 / mu
    cdef double half_inv_mu = 0.5 * inv_mu
    cdef double kappa_bound = 0.0
    cdef Py_ssize_t nrec = 0
    cdef int status = 0
    cdef Py_ssize_t k = 0
    cdef Py_ssize_t i, l, q
    cdef double s, res2, res, c, xi, qc, d, lo, hi, u, sel, v, eps, y
    cdef double mg, pen, fx, gv, hh, lh, dd, e
    cdef int proj
    cdef bint active, converged, last, finite

    while True:
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
            if xi >= 0.0:
                qc = cp[i]
            else:
                qc = cm[i]
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
                eps = act_rel * (1.0 + fabs(xi))
                active = False
                for q in range(bptr[i], bptr[i + 1]):
                    if fabs(xi - bval[q]) <= eps:
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
        res = sqrt(res2)
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
            mg = -INFINITY
            pen = 0.0
            fx = 0.0
            for i in range(n):
                xi = x[i]
                if xi >= 0.0:
                    qc = cp[i]
                else:
                    qc = cm[i]
                fx += w1[i] * fabs(xi) + 0.25 * w4[i] * xi * xi * xi * xi + 0.5 * qc * xi * xi
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
                WV[nrec] = NAN
                V[nrec] = NAN
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
            if not isfinite(y):
                finite = False
            xn[i] = y
        for l in range(p):
            lam[l] = lam[l] + dt * h[l]
            if not isfinite(lam[l]):
                finite = False
        tmp = x
        x = xn
        xn = tmp
        k += 1
        if not finite:
            status = 2
            T[nrec] = k * dt
            for i in range(n):
                X[nrec, i] = x[i]
            for l in range(p):
                LAM[nrec, l] = lam[l]
            RES[nrec] = NAN
            V[nrec] = NAN
            WV[nrec] = NAN
            MG[nrec] = NAN
            PA[nrec] = 0
            nrec += 1
            break
    return nrec, status, kappa_bound, k
