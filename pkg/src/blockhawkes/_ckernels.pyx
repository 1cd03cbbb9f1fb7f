# Compiled event-loop kernels. Reference semantics live in _pykernels.py;
# keep the two in sync (parity is pinned by tests/test_backends.py).
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1, log

cnp.import_array()


def hawkes_loglik(double[::1] times, double horizon, double alpha, double beta,
                  double lam):
    cdef Py_ssize_t m = times.shape[0]
    cdef Py_ssize_t s
    cdef double A = 0.0
    cdef double acc, comp
    if m == 0:
        return -lam * horizon
    acc = log(lam)
    comp = expm1(-beta * (horizon - times[0]))
    for s in range(1, m):
        # A_s = e^{-beta dt} (1 + A_{s-1})
        A = (A + 1.0) * exp(-beta * (times[s] - times[s - 1]))
        acc += log(lam + alpha * A)
        comp += expm1(-beta * (horizon - times[s]))
    return acc + (alpha / beta) * comp - lam * horizon


def hawkes_loglik_weighted(double[::1] times, double[::1] weights, double horizon,
                           double alpha, double beta, double lam):
    cdef Py_ssize_t m = times.shape[0]
    cdef Py_ssize_t s
    cdef double R = 0.0
    cdef double acc, comp
    if m == 0:
        return -lam * horizon
    acc = weights[0] * log(lam)
    comp = weights[0] * expm1(-beta * (horizon - times[0]))
    for s in range(1, m):
        R = (R + weights[s - 1]) * exp(-beta * (times[s] - times[s - 1]))
        acc += weights[s] * log(lam + alpha * R)
        comp += weights[s] * expm1(-beta * (horizon - times[s]))
    return acc + (alpha / beta) * comp - lam * horizon


def hawkes_loglik_weighted_grad(double[::1] times, double[::1] weights,
                                double horizon, double alpha, double beta,
                                double lam):
    cdef Py_ssize_t m = times.shape[0]
    cdef Py_ssize_t s
    cdef double A = 0.0
    cdef double B = 0.0
    cdef double c1 = 0.0
    cdef double c2 = 0.0
    cdef double sA = 0.0
    cdef double sB = 0.0
    cdef double sD = 0.0
    cdef double ll = 0.0
    cdef double w, D, dt, decay, tail
    if m == 0:
        return -lam * horizon, 0.0, 0.0, -horizon
    for s in range(m):
        if s > 0:
            dt = times[s] - times[s - 1]
            decay = exp(-beta * dt)
            # B_s = e^{-beta dt} (B_{s-1} + dt (A_{s-1} + w_{s-1}))
            B = (B + dt * (A + weights[s - 1])) * decay
            A = (A + weights[s - 1]) * decay
        w = weights[s]
        D = lam + alpha * A
        tail = horizon - times[s]
        ll += w * log(D)
        c1 += w * expm1(-beta * tail)
        c2 += w * tail * exp(-beta * tail)
        sD += w / D
        sA += w * A / D
        sB += w * B / D
    ll += (alpha / beta) * c1 - lam * horizon
    return (ll,
            sA + c1 / beta,
            -alpha * sB - alpha * (c1 / beta + c2) / beta,
            sD - horizon)


def elbo_hawkes_value(double[::1] times, cnp.int64_t[::1] send,
                      cnp.int64_t[::1] recv, double[:, ::1] tau,
                      double[:, ::1] alphas, double[:, ::1] betas,
                      double[:, ::1] lams, double horizon):
    cdef Py_ssize_t m = times.shape[0]
    cdef Py_ssize_t k = tau.shape[1]
    cdef Py_ssize_t q, l, s
    cdef double value = 0.0
    cdef double a, b, lam, R, w
    for q in range(k):
        for l in range(k):
            value -= horizon * lams[q, l]
    if m == 0:
        return value
    for q in range(k):
        for l in range(k):
            a = alphas[q, l]
            b = betas[q, l]
            lam = lams[q, l]
            R = 0.0
            for s in range(m):
                if s > 0:
                    R = (R + tau[send[s - 1], q] * tau[recv[s - 1], l]) \
                        * exp(-b * (times[s] - times[s - 1]))
                w = tau[send[s], q] * tau[recv[s], l]
                value += w * (log(lam + a * R)
                              + (a / b) * expm1(-b * (horizon - times[s])))
    return value


def elbo_hawkes_caches(double[::1] times, cnp.int64_t[::1] send,
                       cnp.int64_t[::1] recv, double[:, ::1] tau,
                       double[:, ::1] alphas, double[:, ::1] betas,
                       double[:, ::1] lams, double horizon):
    cdef Py_ssize_t m = times.shape[0]
    cdef Py_ssize_t k = tau.shape[1]
    cdef Py_ssize_t q, l, s
    logd_arr = np.zeros((m, k, k))
    gexc_arr = np.zeros((m, k, k))
    dinv_arr = np.empty(m)
    cdef double[:, :, ::1] logd = logd_arr
    cdef double[:, :, ::1] gexc = gexc_arr
    cdef double[::1] dinv = dinv_arr
    cdef double value = 0.0
    cdef double a, b, lam, R, D, w, g
    for q in range(k):
        for l in range(k):
            value -= horizon * lams[q, l]
    if m == 0:
        return value, logd_arr, gexc_arr
    for q in range(k):
        for l in range(k):
            a = alphas[q, l]
            b = betas[q, l]
            lam = lams[q, l]
            R = 0.0
            for s in range(m):
                if s > 0:
                    R = (R + tau[send[s - 1], q] * tau[recv[s - 1], l]) \
                        * exp(-b * (times[s] - times[s - 1]))
                w = tau[send[s], q] * tau[recv[s], l]
                D = lam + a * R
                dinv[s] = 1.0 / D
                logd[s, q, l] = log(D)
                value += w * (logd[s, q, l]
                              + (a / b) * expm1(-b * (horizon - times[s])))
            g = 0.0
            gexc[m - 1, q, l] = 0.0
            for s in range(m - 2, -1, -1):
                w = tau[send[s + 1], q] * tau[recv[s + 1], l]
                g = (g + w * a * dinv[s + 1]) * exp(-b * (times[s + 1] - times[s]))
                gexc[s, q, l] = g
    return value, logd_arr, gexc_arr


def thinning_consume(double[::1] edraws, double[::1] udraws, double t,
                     double excess, double alpha, double beta, double lam,
                     double horizon, double[::1] out):
    cdef Py_ssize_t nb = edraws.shape[0]
    cdef Py_ssize_t i
    cdef Py_ssize_t n = 0
    cdef double bound, dt, decayed
    for i in range(nb):
        bound = lam + excess
        dt = edraws[i] / bound
        t = t + dt
        if t >= horizon:
            return n, i + 1, t, excess, True
        decayed = excess * exp(-beta * dt)
        if udraws[i] * bound <= lam + decayed:
            out[n] = t
            n += 1
            decayed += alpha
        excess = decayed
    return n, nb, t, excess, False
