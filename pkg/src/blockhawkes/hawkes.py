"""Univariate exponential Hawkes engine.

Conditional intensity ``lam + alpha * sum_{t_i < t} exp(-beta (t - t_i))``.
Everything downstream (block models, variational inference, prediction)
reduces to these four operations: evaluate the log-likelihood, fit by MLE,
simulate by thinning, and integrate the next-event waiting time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .backend import kernels

# Lower box bounds for the log-parameterized MLE. alpha's floor is the
# closest a log-parameterization gets to the alpha >= 0 constraint. The
# upper cap only stops L-BFGS-B from overflowing exp() along directions the
# likelihood is flat in (beta is unidentified once alpha hits its floor).
ALPHA_FLOOR = 1e-10
BETA_FLOOR = 1e-8
LAMBDA_FLOOR = 1e-8
PARAM_CAP = 1e12

_BATCH = 1024  # fixed thinning batch so the draw pattern is seed-determined


class SupercriticalError(RuntimeError):
    """Simulation exceeded the event ceiling; process is likely supercritical."""

    def __init__(self, params: "HawkesParams", events_so_far: int, ceiling: int):
        self.params = params
        self.events_so_far = events_so_far
        super().__init__(
            f"simulation passed {ceiling} events (branching ratio "
            f"{params.branching_ratio:.3g}); raise max_events if intended"
        )


@dataclass(frozen=True)
class HawkesParams:
    """Excitation jump `alpha`, decay `beta`, background rate `lambda_inf`.

    Stationarity (alpha < beta) is deliberately not enforced: likelihood
    evaluation and fitting are well-defined without it.
    """

    alpha: float
    beta: float
    lambda_inf: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be finite and > 0, got {self.beta}")
        if not (np.isfinite(self.lambda_inf) and self.lambda_inf > 0):
            raise ValueError(
                f"lambda_inf must be finite and > 0, got {self.lambda_inf}"
            )

    @property
    def branching_ratio(self) -> float:
        return self.alpha / self.beta

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.lambda_inf)


@dataclass(frozen=True)
class HawkesFit:
    """MLE outcome; `converged` False flags iteration-capped or degenerate fits."""

    params: HawkesParams
    log_likelihood: float
    converged: bool
    iterations: int


def _check_times(times, horizon: float) -> np.ndarray:
    times = np.ascontiguousarray(times, dtype=np.float64)
    if not (np.isfinite(horizon) and horizon > 0):
        raise ValueError(f"horizon must be positive and finite, got {horizon}")
    if times.size:
        if times[0] < 0 or times[-1] > horizon:
            raise ValueError("times must lie in [0, horizon]")
        if np.any(np.diff(times) < 0):
            raise ValueError("times must be sorted ascending")
    return times


def intensity(params: HawkesParams, history, t: float) -> float:
    """Conditional intensity at `t`; only events strictly before `t` count."""
    history = np.asarray(history, dtype=np.float64)
    past = history[history < t]
    if past.size == 0:
        return float(params.lambda_inf)
    excite = np.exp(-params.beta * (t - past)).sum()
    return float(params.lambda_inf + params.alpha * excite)


def log_likelihood(params: HawkesParams, times, horizon: float) -> float:
    """Exact log-likelihood of `times` observed on ``[0, horizon]``.

    Evaluated with the O(m) excitation recursion. Passing the last event time
    as the horizon reproduces the convention where observation stops at the
    final event; model fitting in this package passes the full window length.
    """
    times = _check_times(times, horizon)
    return float(kernels.hawkes_loglik(
        times, float(horizon), params.alpha, params.beta, params.lambda_inf
    ))


def fit_mle(
    times,
    horizon: float,
    *,
    weights=None,
    init: HawkesParams | None = None,
    max_iterations: int = 500,
) -> HawkesFit:
    """Maximum-likelihood fit over log-parameterized (alpha, beta, lambda_inf).

    Quasi-Newton (L-BFGS-B) with analytic gradients from the excitation
    recursions, box floors ALPHA_FLOOR/BETA_FLOOR/LAMBDA_FLOOR. Default
    initialization: lambda_inf = m/horizon, beta = 1, alpha = beta/2. An
    empty sequence short-circuits to the floor convention
    (alpha=0, beta=BETA_FLOOR, lambda_inf=LAMBDA_FLOOR), flagged unconverged.

    `weights` (optional, one per event) fits the expected log-likelihood
    where event s counts with weight w_s both as an observation and as an
    exciter; soft class responsibilities enter this way. Near-zero total
    weight falls back to the empty-sequence convention.
    """
    times = _check_times(times, horizon)
    m = times.shape[0]
    if weights is not None:
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.shape != times.shape:
            raise ValueError("weights must match times in length")
        if weights.size and (weights.min() < 0 or not np.isfinite(weights).all()):
            raise ValueError("weights must be finite and >= 0")
    if m == 0 or (weights is not None and weights.sum() < 1e-12):
        empty = HawkesParams(0.0, BETA_FLOOR, LAMBDA_FLOOR)
        return HawkesFit(empty, -LAMBDA_FLOOR * horizon, False, 0)
    if init is None:
        rate = (m if weights is None else float(weights.sum())) / horizon
        init = HawkesParams(0.5, 1.0, rate)
    x0 = np.log([
        max(init.alpha, ALPHA_FLOOR),
        max(init.beta, BETA_FLOOR),
        max(init.lambda_inf, LAMBDA_FLOOR),
    ])
    horizon = float(horizon)
    wvec = np.ones(m) if weights is None else weights

    def negloglik(x):
        # gradient in log-params: chain rule multiplies each partial by its
        # parameter, and the sign flips for minimization
        a, b, lam = np.exp(x)
        ll, da, db, dl = kernels.hawkes_loglik_weighted_grad(
            times, wvec, horizon, a, b, lam
        )
        return -ll, np.array([-da * a, -db * b, -dl * lam])

    cap = math.log(PARAM_CAP)
    bounds = [
        (math.log(ALPHA_FLOOR), cap),
        (math.log(BETA_FLOOR), cap),
        (math.log(LAMBDA_FLOOR), cap),
    ]
    result = optimize.minimize(
        negloglik,
        x0,
        method="L-BFGS-B",
        jac=True,
        bounds=bounds,
        options={
            "maxiter": max_iterations,
            "ftol": 1e-10,
            "gtol": 1e-6,
        },
    )
    a, b, lam = np.exp(result.x)
    params = HawkesParams(float(a), float(b), float(lam))
    if weights is None:
        ll = float(kernels.hawkes_loglik(times, horizon, a, b, lam))
    else:
        ll = float(kernels.hawkes_loglik_weighted(times, weights, horizon,
                                                  a, b, lam))
    return HawkesFit(params, ll, bool(result.success), int(result.nit))


def simulate(
    params: HawkesParams,
    horizon: float,
    rng,
    *,
    max_events: int = 10_000_000,
) -> np.ndarray:
    """Exact thinning sampler on ``[0, horizon)``.

    `rng` is a seed or ``numpy.random.Generator``. The piecewise-constant
    upper bound is the intensity just after each candidate, which dominates
    the decaying intensity until the next accepted point. Draw consumption is
    batched identically on both kernel backends, so a seed fully determines
    the output. Raises `SupercriticalError` past `max_events`.
    """
    if not (np.isfinite(horizon) and horizon > 0):
        raise ValueError(f"horizon must be positive and finite, got {horizon}")
    gen = np.random.default_rng(rng)
    a, b, lam = params.as_tuple()
    buf = np.empty(_BATCH)
    parts: list[np.ndarray] = []
    total = 0
    t = 0.0
    excess = 0.0
    while True:
        edraws = gen.standard_exponential(_BATCH)
        udraws = gen.random(_BATCH)
        n, _, t, excess, done = kernels.thinning_consume(
            edraws, udraws, t, excess, a, b, lam, float(horizon), buf
        )
        if n:
            parts.append(buf[:n].copy())
            total += n
        if done:
            break
        if total > max_events:
            raise SupercriticalError(params, total, max_events)
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def expected_next_event_time(
    params: HawkesParams, history, now: float
) -> float:
    """Expected waiting time from `now` to the next event, given `history`.

    Integrates the survival function ``exp(-Lambda(now, now+t))`` by adaptive
    quadrature (relative tolerance well under 1e-6), truncated where the
    survivor drops below 1e-12; the discarded tail is bounded by
    ``1e-12 / lambda_inf`` because the background rate alone kills it.
    Events at exactly `now` still excite the future.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.size and history.max() > now:
        raise ValueError("history must not extend past `now`")
    a, b, lam = params.as_tuple()
    excess = float(a * np.exp(-b * (now - history)).sum()) if history.size else 0.0

    def survival(t):
        return np.exp(-lam * t - (excess / b) * (-np.expm1(-b * t)))

    upper = -math.log(1e-12) / lam
    value, _ = integrate.quad(survival, 0.0, upper, epsabs=0.0, epsrel=1e-8,
                              limit=200)
    return float(value)
