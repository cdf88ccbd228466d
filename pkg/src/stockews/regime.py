"""Two-state AR(1)-SWARCH(2,1) volatility regimes.

Model, with state 1 the calm regime and state 2 the turbulent one::

    y_t   = u + theta1 * y_{t-1} + eps_t,      eps_t | past ~ N(0, h_t^2)
    h_t^2 = gamma_{s_t} * (alpha0 + alpha1 * eps_{t-1}^2 / gamma_{s_{t-1}})

with gamma_1 = 1 and a first-order Markov chain on s_t. Because h_t depends on
both s_t and s_{t-1}, the filter carries the joint distribution of the pair.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.special import expit, logit

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
MIN_ESTIMATION_SAMPLE = 100
_LOG_2PI = math.log(2.0 * math.pi)


class NumericError(ArithmeticError):
    """A filter step produced a degenerate variance or likelihood."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class EstimationError(RuntimeError):
    """No optimizer start converged."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or []


@dataclass(frozen=True)
class SwarchParams:
    u: float
    theta1: float
    alpha0: float
    alpha1: float
    gamma2: float
    p11: float
    p22: float

    def validate(self) -> "SwarchParams":
        problems = []
        if not self.alpha0 > 0:
            problems.append("alpha0 must be > 0")
        if not self.alpha1 >= 0:
            problems.append("alpha1 must be >= 0")
        if not self.gamma2 >= 1:
            problems.append("gamma2 must be >= 1")
        if not 0 < self.p11 < 1 or not 0 < self.p22 < 1:
            problems.append("p11 and p22 must lie in (0, 1)")
        if not abs(self.theta1) < 1:
            problems.append("|theta1| must be < 1")
        if problems:
            raise ValueError("invalid SWARCH parameters: " + "; ".join(problems))
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.theta1, self.alpha0, self.alpha1, self.gamma2, self.p11, self.p22])

    @classmethod
    def from_array(cls, x) -> "SwarchParams":
        return cls(*(float(v) for v in x))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SwarchParams":
        d = json.loads(text)
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})


@dataclass
class FilterOutput:
    """Filtered regime probabilities.

    ``prob_high[t]`` is P(s_t = 2 | y_0..y_t). Index 0 carries the prior,
    since y_0 only serves as the AR lag. ``joint_probs[t, i, j]`` is
    P(s_t = i+1, s_{t-1} = j+1 | y_0..y_t).
    """

    prob_high: np.ndarray
    log_likelihood: float
    joint_probs: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {"log_likelihood": self.log_likelihood, "prob_high": self.prob_high.tolist()},
            indent=2,
        )


@dataclass
class SimulatedPath:
    returns: np.ndarray
    true_states: np.ndarray
    seed: int
    eps: np.ndarray = field(repr=False, default=None)


def ergodic_distribution(p11: float, p22: float) -> tuple[float, float]:
    denom = 2.0 - p11 - p22
    if denom <= 0:
        raise ValueError("degenerate chain: p11 = p22 = 1 has no unique stationary distribution")
    pi1 = (1.0 - p22) / denom
    return pi1, 1.0 - pi1


@njit(cache=True)
def _filter_core(y, u, theta1, alpha0, alpha1, gamma2, p11, p22, init, eps0sq, joint, prob):
    """Returns (loglik, status); status > 0 is the offending t."""
    T = y.shape[0]
    gam = np.array([1.0, gamma2])
    trans = np.array([[p11, 1.0 - p11], [1.0 - p22, p22]])
    marg = init.copy()
    for i in range(2):
        for j in range(2):
            joint[0, i, j] = init[i] * init[j]
    prob[0] = marg[1]
    loglik = 0.0
    eps_prev_sq = eps0sq
    logd = np.empty((2, 2))
    pred = np.empty((2, 2))
    for t in range(1, T):
        eps = y[t] - u - theta1 * y[t - 1]
        e2 = eps * eps
        m = -np.inf
        for j in range(2):
            for i in range(2):
                pred[j, i] = trans[i, j] * marg[i]
                h2 = gam[j] * (alpha0 + alpha1 * eps_prev_sq / gam[i])
                if not (h2 >= 1e-12) or not np.isfinite(h2):
                    return loglik, t
                logd[j, i] = -0.5 * (1.8378770664093453 + math.log(h2) + e2 / h2)
                if pred[j, i] > 0.0 and logd[j, i] > m:
                    m = logd[j, i]
        if not np.isfinite(m):
            return loglik, t
        total = 0.0
        for j in range(2):
            for i in range(2):
                w = pred[j, i] * math.exp(logd[j, i] - m)
                joint[t, j, i] = w
                total += w
        if not (total > 0.0) or not np.isfinite(total):
            return loglik, t
        for j in range(2):
            marg[j] = 0.0
            for i in range(2):
                joint[t, j, i] /= total
                marg[j] += joint[t, j, i]
        prob[t] = marg[1]
        loglik += math.log(total) + m
        eps_prev_sq = e2
    return loglik, 0


def _presample_eps_sq(y: np.ndarray) -> float:
    return float(np.var(y))


def hamilton_filter(params: SwarchParams, returns, initial=None, presample_eps_sq=None) -> FilterOutput:
    """Run the pair-state Hamilton filter.

    ``initial`` is P(s_0) (default: ergodic). The pre-sample squared residual
    defaults to the sample variance of ``returns``.
    """
    y = np.ascontiguousarray(getattr(returns, "values", returns), dtype=float)
    if y.ndim != 1 or len(y) < 3:
        raise ValueError("the filter needs at least 3 returns")
    if initial is None:
        params.validate()
        initial = ergodic_distribution(params.p11, params.p22)
    init = np.asarray(initial, dtype=float)
    eps0sq = _presample_eps_sq(y) if presample_eps_sq is None else float(presample_eps_sq)
    joint = np.zeros((len(y), 2, 2))
    prob = np.zeros(len(y))
    ll, status = _filter_core(
        y, params.u, params.theta1, params.alpha0, params.alpha1, params.gamma2,
        params.p11, params.p22, init, eps0sq, joint, prob,
    )
    if status:
        raise NumericError(f"degenerate variance or likelihood at t={status}", t=int(status))
    return FilterOutput(prob, float(ll), joint)


def simulate_swarch(params: SwarchParams, length: int, seed: int = 0) -> SimulatedPath:
    """Draw a path; the first return starts from the ergodic state and a zero lag."""
    params.validate()
    if length < 10:
        raise ValueError("length must be >= 10")
    rng = np.random.default_rng(seed)
    pi1, _ = ergodic_distribution(params.p11, params.p22)
    uniforms = rng.random(length)
    shocks = rng.standard_normal(length)
    states = np.empty(length, dtype=np.int64)
    states[0] = 1 if uniforms[0] < pi1 else 2
    stay = (params.p11, params.p22)
    for t in range(1, length):
        prev = states[t - 1]
        states[t] = prev if uniforms[t] < stay[prev - 1] else 3 - prev
    gam = np.where(states == 1, 1.0, params.gamma2)
    y = np.empty(length)
    eps = np.empty(length)
    # pre-sample shock at its unconditional calm-regime size
    eps_prev_sq = params.alpha0 / max(1.0 - params.alpha1, 1e-3)
    gam_prev = 1.0
    y_prev = params.u / (1.0 - params.theta1)
    for t in range(length):
        h2 = gam[t] * (params.alpha0 + params.alpha1 * eps_prev_sq / gam_prev)
        eps[t] = math.sqrt(h2) * shocks[t]
        y[t] = params.u + params.theta1 * y_prev + eps[t]
        eps_prev_sq, gam_prev, y_prev = eps[t] ** 2, gam[t], y[t]
    return SimulatedPath(returns=y, true_states=states, seed=seed, eps=eps)


# -- estimation ---------------------------------------------------------------

def to_unconstrained(p: SwarchParams) -> np.ndarray:
    return np.array([
        p.u,
        logit((p.theta1 + 1.0) / 2.0),
        math.log(p.alpha0),
        math.log(max(p.alpha1, 1e-10)),
        math.log(max(p.gamma2 - 1.0, 1e-10)),
        logit(p.p11),
        logit(p.p22),
    ])


def from_unconstrained(z) -> SwarchParams:
    z = np.clip(np.asarray(z, dtype=float), -700, 700)
    return SwarchParams(
        u=float(z[0]),
        theta1=float(2.0 * expit(z[1]) - 1.0),
        alpha0=float(math.exp(z[2])),
        alpha1=float(math.exp(z[3])),
        gamma2=float(1.0 + math.exp(z[4])),
        p11=float(expit(z[5])),
        p22=float(expit(z[6])),
    )


def _loglik_unconstrained(z, y, eps0sq, joint, prob) -> float:
    p = from_unconstrained(z)
    if not (0 < p.p11 < 1 and 0 < p.p22 < 1 and abs(p.theta1) < 1 and p.alpha0 > 0):
        return -np.inf
    init = np.array(ergodic_distribution(p.p11, p.p22))
    ll, status = _filter_core(y, p.u, p.theta1, p.alpha0, p.alpha1, p.gamma2, p.p11, p.p22,
                              init, eps0sq, joint, prob)
    if status or not np.isfinite(ll):
        return -np.inf
    return ll


@dataclass
class StartResult:
    index: int
    start: SwarchParams
    start_loglik: float
    params: SwarchParams
    loglik: float
    converged: bool
    n_evals: int


@dataclass
class SwarchFit:
    """Estimation result; unpacks as ``params, filter_output``."""

    params: SwarchParams
    filter: FilterOutput
    starts: list[StartResult]
    flags: list[str]

    @property
    def log_likelihood(self) -> float:
        return self.filter.log_likelihood

    def __iter__(self):
        yield self.params
        yield self.filter


def default_start(y: np.ndarray) -> SwarchParams:
    var = float(np.var(y)) or 1.0
    return SwarchParams(u=float(np.mean(y)), theta1=0.0, alpha0=0.5 * var, alpha1=0.1,
                        gamma2=3.0, p11=0.95, p22=0.9)


def boundary_flags(p: SwarchParams) -> list[str]:
    flags = []
    if p.gamma2 < 1.05:
        flags.append("gamma2_at_lower_bound")
    for name in ("p11", "p22"):
        v = getattr(p, name)
        if v < 1e-3 or v > 1 - 1e-4:
            flags.append(f"{name}_at_boundary")
    if p.alpha1 < 1e-6:
        flags.append("alpha1_at_zero")
    return flags


def estimate_swarch(returns, starts: int = 5, seed: int = 0, init: SwarchParams | list | None = None,
                    maxfev: int = 6000) -> SwarchFit:
    """Multi-start maximum likelihood over the constrained parameter space.

    Start 0 is ``init`` (or a data-driven default); further starts perturb it
    randomly on the unconstrained scale. When ``init`` is a list, each entry
    is used as a start before random ones are added. Nelder-Mead runs on the
    unconstrained parameters and is restarted once from its own optimum.
    """
    y = np.ascontiguousarray(getattr(returns, "values", returns), dtype=float)
    if len(y) < 3:
        raise ValueError("estimation needs at least 3 returns")
    flags = []
    if len(y) < MIN_ESTIMATION_SAMPLE:
        logger.warning("estimating SWARCH on only %d returns", len(y))
        flags.append("short_sample")
    if starts < 1:
        raise ValueError("starts must be >= 1")

    rng = np.random.default_rng(seed)
    fixed = [] if init is None else (list(init) if isinstance(init, (list, tuple)) else [init])
    base = fixed[0] if fixed else default_start(y)
    z_base = to_unconstrained(base)
    start_points = [to_unconstrained(p) for p in fixed] or [z_base]
    spread = np.array([0.5 * (np.std(y) or 1.0) / math.sqrt(len(y)) + 0.05, 0.3, 0.7, 1.0, 0.8, 1.0, 1.0])
    while len(start_points) < starts:
        start_points.append(z_base + spread * rng.standard_normal(7))

    eps0sq = _presample_eps_sq(y)
    joint = np.zeros((len(y), 2, 2))
    prob = np.zeros(len(y))
    n = len(y)

    def objective(z):
        ll = _loglik_unconstrained(z, y, eps0sq, joint, prob)
        return -ll / n if np.isfinite(ll) else 1e10

    results: list[StartResult] = []
    for k, z0 in enumerate(start_points):
        start_ll = -objective(z0) * n
        opts = dict(maxfev=maxfev, xatol=1e-6, fatol=1e-10, adaptive=True)
        res = minimize(objective, z0, method="Nelder-Mead", options=opts)
        nfev = res.nfev
        if res.fun < 1e10:
            res2 = minimize(objective, res.x, method="Nelder-Mead", options=opts)
            nfev += res2.nfev
            if res2.fun <= res.fun:
                res = res2
        ll = -res.fun * n if res.fun < 1e10 else -np.inf
        converged = bool(res.success) and np.isfinite(ll)
        results.append(StartResult(k, from_unconstrained(z0), start_ll, from_unconstrained(res.x), ll,
                                   converged, nfev))
        logger.debug("start %d: loglik %.4f -> %.4f (%s)", k, start_ll, ll, "ok" if converged else "no conv")

    ok = [r for r in results if r.converged]
    if not ok:
        best = max(results, key=lambda r: (r.loglik, -r.index))
        raise EstimationError("no SWARCH start converged", best=best, diagnostics=results)
    # ties resolve to the lowest start index
    best = max(ok, key=lambda r: (r.loglik, -r.index))
    filt = hamilton_filter(best.params, y)
    flags += boundary_flags(best.params)
    if flags:
        logger.info("SWARCH estimate flags: %s", ", ".join(flags))
    return SwarchFit(best.params, filt, results, flags)


def numerical_standard_errors(params: SwarchParams, returns, step: float = 1e-4) -> np.ndarray:
    """Standard errors from the inverse of a central-difference Hessian
    of the log-likelihood in the natural parameterization."""
    y = np.ascontiguousarray(getattr(returns, "values", returns), dtype=float)
    x0 = params.as_array()
    eps0sq = _presample_eps_sq(y)
    joint = np.zeros((len(y), 2, 2))
    prob = np.zeros(len(y))

    def ll(x):
        p = SwarchParams.from_array(x)
        init = np.array(ergodic_distribution(p.p11, p.p22))
        val, status = _filter_core(y, *x, init, eps0sq, joint, prob)
        return -np.inf if status else val

    k = len(x0)
    hs = step * np.maximum(np.abs(x0), 1e-2)
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = hs[i]
            ej[j] = hs[j]
            val = (ll(x0 + ei + ej) - ll(x0 + ei - ej) - ll(x0 - ei + ej) + ll(x0 - ei - ej)) / (4 * hs[i] * hs[j])
            hess[i, j] = hess[j, i] = val
    cov = np.linalg.pinv(-hess)
    return np.sqrt(np.clip(np.diag(cov), 0, None))
