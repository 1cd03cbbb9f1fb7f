"""Pure NumPy fallback kernels.

Mirrors :mod:`blockhawkes._ckernels`: same signatures, same semantics, and the
thinning sampler consumes the pre-drawn random batches identically, so
simulation output does not depend on which backend is active.

The O(m) likelihood recursions are evaluated in log space with prefix/suffix
``logaddexp`` scans so the fallback stays vectorized instead of looping per
event in Python.
"""

import math

import numpy as np


def hawkes_loglik(times, horizon, alpha, beta, lam):
    """Exponential Hawkes log-likelihood of sorted `times` on [0, horizon]."""
    m = times.shape[0]
    if m == 0:
        return -lam * horizon
    # A[s] = sum_{r<s} exp(-beta (t_s - t_r)) via a prefix logsumexp scan
    c = beta * times
    A = np.zeros(m)
    if m > 1:
        A[1:] = np.exp(np.logaddexp.accumulate(c)[:-1] - c[1:])
    comp = (alpha / beta) * np.expm1(-beta * (horizon - times)).sum()
    return float(np.log(lam + alpha * A).sum() + comp - lam * horizon)


def hawkes_loglik_weighted(times, weights, horizon, alpha, beta, lam):
    """Weighted variant: event r excites with weight w_r, event s contributes
    w_s * log-intensity and w_s-scaled compensator jump."""
    m = times.shape[0]
    if m == 0:
        return -lam * horizon
    c = beta * times
    with np.errstate(divide="ignore"):
        lw = np.log(weights)
    R = np.zeros(m)
    if m > 1:
        R[1:] = np.exp(np.logaddexp.accumulate(lw + c)[:-1] - c[1:])
    comp = (alpha / beta) * float(weights @ np.expm1(-beta * (horizon - times)))
    return float(weights @ np.log(lam + alpha * R) + comp - lam * horizon)


def hawkes_loglik_weighted_grad(times, weights, horizon, alpha, beta, lam):
    """Weighted log-likelihood with its gradient in (alpha, beta, lambda).

    Returns ``(ll, d_alpha, d_beta, d_lam)``. Needs two more prefix scans
    than the value alone: A_s (discounted weight mass before s) drives the
    alpha direction, and B_s = sum_{r<s} w_r (t_s - t_r) e^{-beta (t_s - t_r)}
    drives the beta direction via B = t * A - E with
    E_s = sum_{r<s} w_r t_r e^{-beta (t_s - t_r)}.
    """
    m = times.shape[0]
    if m == 0:
        return -lam * horizon, 0.0, 0.0, -horizon
    c = beta * times
    with np.errstate(divide="ignore"):
        lw = np.log(weights)
        lwt = lw + np.log(times)
    A = np.zeros(m)
    E = np.zeros(m)
    if m > 1:
        A[1:] = np.exp(np.logaddexp.accumulate(lw + c)[:-1] - c[1:])
        E[1:] = np.exp(np.logaddexp.accumulate(lwt + c)[:-1] - c[1:])
    B = times * A - E
    D = lam + alpha * A
    tail = horizon - times
    c1 = float(weights @ np.expm1(-beta * tail))
    c2 = float(weights @ (tail * np.exp(-beta * tail)))
    wd = weights / D
    ll = float(weights @ np.log(D)) + (alpha / beta) * c1 - lam * horizon
    d_alpha = float(wd @ A) + c1 / beta
    d_beta = -alpha * float(wd @ B) - alpha * (c1 / beta + c2) / beta
    d_lam = float(wd.sum()) - horizon
    return ll, d_alpha, d_beta, d_lam


def _pair_weights(send, recv, tau):
    # (m, k, k) array of tau[u_s, q] * tau[v_s, l]
    return tau[send][:, :, None] * tau[recv][:, None, :]


def elbo_hawkes_value(times, send, recv, tau, alphas, betas, lams, horizon):
    """Sum over ordered class pairs of the tau-weighted Hawkes terms."""
    k = tau.shape[1]
    if times.shape[0] == 0:
        return float(-horizon * lams.sum())
    wall = _pair_weights(send, recv, tau)
    value = 0.0
    for q in range(k):
        for l in range(k):
            value += hawkes_loglik_weighted(
                times, wall[:, q, l], horizon, alphas[q, l], betas[q, l], lams[q, l]
            )
    return float(value)


def elbo_hawkes_caches(times, send, recv, tau, alphas, betas, lams, horizon):
    """Value plus per-event caches for row gradients.

    Returns ``(value, logd, gexc)`` where, for event s and class pair (q, l),
    ``logd[s, q, l]`` is the log of the weighted intensity
    ``lam + alpha * R_s`` and ``gexc[s, q, l]`` is the discounted influence of
    event s on all later log terms,
    ``sum_{r>s} w_r * (alpha / D_r) * exp(-beta (t_r - t_s))``.
    """
    m = times.shape[0]
    k = tau.shape[1]
    logd = np.zeros((m, k, k))
    gexc = np.zeros((m, k, k))
    value = float(-horizon * lams.sum())
    if m == 0:
        return value, logd, gexc
    wall = _pair_weights(send, recv, tau)
    c_base = times
    for q in range(k):
        for l in range(k):
            a = alphas[q, l]
            b = betas[q, l]
            lam = lams[q, l]
            w = wall[:, q, l]
            c = b * c_base
            with np.errstate(divide="ignore"):
                lw = np.log(w)
            R = np.zeros(m)
            if m > 1:
                R[1:] = np.exp(np.logaddexp.accumulate(lw + c)[:-1] - c[1:])
            D = lam + a * R
            ld = np.log(D)
            logd[:, q, l] = ld
            value += float(w @ ld) + (a / b) * float(w @ np.expm1(-b * (horizon - times)))
            if m > 1:
                with np.errstate(divide="ignore"):
                    h = np.log(w * a / D) - c
                suf = np.logaddexp.accumulate(h[::-1])[::-1]
                gexc[: m - 1, q, l] = np.exp(suf[1:] + c[: m - 1])
    return value, logd, gexc


def thinning_consume(edraws, udraws, t, excess, alpha, beta, lam, horizon, out):
    """Run thinning on one batch of Exp(1)/Uniform draws.

    `excess` is the excitation part of the intensity just after time `t`
    (an upper bound for the rest of the inter-candidate interval, since it
    only decays until the next accepted point). Returns
    ``(n_accepted, n_consumed, t, excess, done)``.
    """
    nb = edraws.shape[0]
    n = 0
    for i in range(nb):
        bound = lam + excess
        dt = edraws[i] / bound
        t = t + dt
        if t >= horizon:
            return n, i + 1, t, excess, True
        decayed = excess * math.exp(-beta * dt)
        if udraws[i] * bound <= lam + decayed:
            out[n] = t
            n += 1
            decayed += alpha
        excess = decayed
    return n, nb, t, excess, False
