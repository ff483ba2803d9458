"""The four sampling-based MPC optimizers and per-control-step orchestration.

Variants:
  forward -- weighted-MLE Gaussian refit with smoothing (CEM / MPPI style).
  reverse -- signed-weight mirror descent in the KL geometry.
  reject  -- decomposed +/- policies with pseudo-rejection batch sampling.
  accel   -- reject plus modified Nesterov acceleration on mirror descent,
             with a noise-adaptive step-size schedule.

All updates are pure functions; `solve` owns the per-step state, the
deadline bookkeeping, and the counter-based RNG streams that keep results
independent of rollout parallelism.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .envs import EnvSpec, rollout_batch
from .policy import (
    SIGMA_FLOOR,
    MirrorPoint,
    PolicyParams,
    log_density,
    mirror_inverse,
    mirror_map,
    sample_batch,
    squash,
    standard_prior,
)
from .weights import WeightConfig, forward_weights, partition_clusters, signed_log_weights

VARIANTS = ("forward", "reverse", "reject", "accel")


@dataclass(frozen=True)
class SolverConfig:
    n_candidates: int = 32
    n_oversample: int = 128  # used by reject / accel
    horizon: int = 12
    alpha: float = 0.05
    gamma: float = 0.5
    eta: float = 0.25
    kappa: float = 1.0
    weights: WeightConfig = field(default_factory=WeightConfig)
    deadline: float = math.inf  # seconds of wall clock per control step
    max_iterations: int = 32
    sigma_floor: float = SIGMA_FLOOR
    nonfinite_penalty: float = 1e6
    rollout_threads: int = 1

    def __post_init__(self):
        if self.n_candidates < 2:
            raise ValueError(f"need n_candidates >= 2, got {self.n_candidates}")
        if self.n_oversample < self.n_candidates:
            raise ValueError("n_oversample must be >= n_candidates")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.gamma < 0.0 or self.kappa < 0.0:
            raise ValueError("gamma and kappa must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.horizon < 1 or self.max_iterations < 1 or self.rollout_threads < 1:
            raise ValueError("horizon, max_iterations, rollout_threads must be >= 1")


@dataclass(frozen=True)
class SolverState:
    theta_plus: PolicyParams
    theta_minus: PolicyParams | None = None
    theta_tilde_plus: PolicyParams | None = None
    theta_tilde_minus: PolicyParams | None = None
    a_i: float = 0.0
    A_i: float = 0.0
    sigma_max_running: float = 0.0
    iteration: int = 0


@dataclass(frozen=True)
class ControlResult:
    u: np.ndarray  # first squashed action, shape (A,)
    iterations: int
    best_cost: float
    wall_time: float
    noise_strength_final: float
    iteration_times: tuple[float, ...]
    cost_trace: tuple[float, ...] = ()  # min batch cost per iteration
    no_positive_update: bool = False
    all_zero_weights: bool = False
    nonfinite_candidates: int = 0


def forward_update(
    theta_i: PolicyParams,
    u_batch: np.ndarray,
    weights: np.ndarray,
    alpha: float,
    sigma_floor: float = SIGMA_FLOOR,
) -> tuple[PolicyParams, bool]:
    """Smoothed weighted-MLE refit; returns (params, all_weights_zero flag)."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0.0:
        return theta_i, True
    wc = w[:, None, None] / total
    mu_star = (wc * u_batch).sum(axis=0)
    var_star = (wc * (u_batch - mu_star) ** 2).sum(axis=0)
    sigma_star = np.sqrt(var_star)
    mu = (1.0 - alpha) * theta_i.mu + alpha * mu_star
    sigma = (1.0 - alpha) * theta_i.sigma + alpha * sigma_star
    return PolicyParams(mu, np.maximum(sigma, sigma_floor)), False


def md_gradient(
    theta: PolicyParams,
    u_batch: np.ndarray,
    lnH: np.ndarray,
    cluster: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster-averaged gradient of the signed weighted log-likelihood.

    g = (1/|C|) sum_{n in C} (-lnH^n) * grad_theta ln pi(U^n; theta), with the
    diagonal-Gaussian score functions written out element-wise.
    """
    cluster = np.asarray(cluster, dtype=int)
    if cluster.size == 0:
        raise ValueError("empty cluster: no update for this side")
    u = u_batch[cluster]
    w = np.asarray(lnH, dtype=float)[cluster][:, None, None]
    diff = u - theta.mu
    var = theta.sigma**2
    g_mu = (-w * diff / var).mean(axis=0)
    g_sigma = (-w * (diff**2 - var) / (var * theta.sigma)).mean(axis=0)
    return g_mu, g_sigma


def reverse_update(
    theta_i: PolicyParams,
    u_batch: np.ndarray,
    lnH: np.ndarray,
    alpha: float,
    cluster: np.ndarray | None = None,
    sigma_floor: float = SIGMA_FLOOR,
) -> PolicyParams:
    """One mirror-descent step anchored at theta_i."""
    if cluster is None:
        cluster = np.arange(u_batch.shape[0])
    g_mu, g_sigma = md_gradient(theta_i, u_batch, lnH, cluster)
    z = mirror_map(theta_i, theta_i)
    z_new = MirrorPoint(z.z_mu - alpha * g_mu, z.z_sigma - alpha * g_sigma, theta_i)
    out = mirror_inverse(z_new)
    return PolicyParams(out.mu, np.maximum(out.sigma, sigma_floor))


def reject_update(
    state: SolverState,
    u_batch: np.ndarray,
    lnH: np.ndarray,
    alpha: float,
    sigma_floor: float = SIGMA_FLOOR,
) -> SolverState:
    """Update theta+ over C+ and theta- over C-, each side under its own
    mirror geometry; a side with an empty cluster is left untouched.

    theta- is trained with |lnH| as positive weights, so pi- becomes a
    density model of the bad candidates.
    """
    c_plus, c_minus = partition_clusters(lnH)
    theta_plus = state.theta_plus
    theta_minus = state.theta_minus if state.theta_minus is not None else state.theta_plus
    if c_plus.size:
        theta_plus = reverse_update(theta_plus, u_batch, lnH, alpha, c_plus, sigma_floor)
    if c_minus.size:
        theta_minus = reverse_update(theta_minus, u_batch, -np.asarray(lnH), alpha, c_minus, sigma_floor)
    return replace(state, theta_plus=theta_plus, theta_minus=theta_minus, iteration=state.iteration + 1)


def selection_log_scores(
    theta_plus: PolicyParams,
    theta_minus: PolicyParams,
    u_batch: np.ndarray,
    kappa: float,
) -> np.ndarray:
    """Unnormalized log score of the complementary distribution per candidate.

    score(U) = 1 / (pi-(U) + kappa * pi+(mu-)), evaluated in the log domain;
    the pi+(mu-) anchor keeps selection sane when the two policies overlap.
    """
    log_pm = log_density(theta_minus, u_batch)
    if kappa == 0.0:
        return -log_pm
    anchor = math.log(kappa) + float(log_density(theta_plus, theta_minus.mu))
    return -np.logaddexp(log_pm, anchor)


def compose_and_sample(
    theta_plus: PolicyParams,
    theta_minus: PolicyParams,
    n_tilde: int,
    n: int,
    kappa: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Oversample n_tilde candidates from pi+ and keep n of them, selected
    without replacement with probability proportional to the complementary
    distribution (Gumbel perturbed-key top-n, so no normalization constant
    is needed and the cost is one pass over n_tilde).
    """
    if n_tilde < n:
        raise ValueError("n_tilde must be >= n")
    u_all = sample_batch(theta_plus, n_tilde, rng)
    scores = selection_log_scores(theta_plus, theta_minus, u_all, kappa)
    keys = scores + rng.gumbel(size=n_tilde)
    chosen = np.sort(np.argsort(-keys, kind="stable")[:n])
    return u_all[chosen]


def noise_strength(J: np.ndarray, sigma_max_running: float) -> tuple[float, float]:
    """Scalar noise-strength estimate in [0, 1] from the cost dispersion.

    Compares the standard deviation with the mean absolute deviation (equal
    for symmetric two-point samples; ratio ~0.8 for Gaussians) and scales by
    the running maximum of the per-iteration MADs, which is robust to cost
    outliers.  Returns (s, updated running max).
    """
    J = np.asarray(J, dtype=float).ravel()
    if J.size < 2:
        raise ValueError("need at least two cost samples")
    std = float(J.std())
    mad = float(np.abs(J - J.mean()).mean())
    new_max = max(sigma_max_running, mad)
    if std <= 0.0 or new_max <= 0.0:
        return 0.0, new_max
    s = (1.0 - mad / std) * (std / new_max)
    return float(np.clip(s, 0.0, 1.0)), new_max


def step_size_advance(a_i: float, A_i: float, s_i: float, alpha: float, gamma: float) -> tuple[float, float]:
    """Advance the accelerated schedule: a grows by alpha, slowed by noise."""
    if a_i <= 0.0:
        raise ValueError("a_i must be > 0")
    a_next = a_i + alpha / (1.0 + 5.0 * gamma * s_i)
    return a_next, A_i + a_next


def agd_plus_step(
    theta_i: PolicyParams,
    theta_tilde_prev: PolicyParams,
    g_mu: np.ndarray,
    g_sigma: np.ndarray,
    a_i: float,
    A_i: float,
    a_next: float,
    A_next: float,
    anchor: PolicyParams | None = None,
    sigma_floor: float = SIGMA_FLOOR,
) -> tuple[PolicyParams, PolicyParams]:
    """One accelerated mirror-descent step; returns (theta_next, theta_tilde).

    The mirror maps are anchored at theta_i (the dynamic geometry), unless an
    explicit static anchor is supplied.  The new iterate interpolates theta_i
    with the momentum point and adds the momentum difference term.
    """
    if anchor is None:
        anchor = theta_i
    zt = mirror_map(theta_tilde_prev, anchor)
    z_new = MirrorPoint(zt.z_mu - a_i * g_mu, zt.z_sigma - a_i * g_sigma, anchor)
    tilde = mirror_inverse(z_new)
    w_keep = A_i / A_next
    w_new = a_next / A_next
    w_mom = a_i / A_next
    mu = w_keep * theta_i.mu + w_new * tilde.mu + w_mom * (tilde.mu - theta_tilde_prev.mu)
    sigma = w_keep * theta_i.sigma + w_new * tilde.sigma + w_mom * (tilde.sigma - theta_tilde_prev.sigma)
    theta_next = PolicyParams(mu, np.maximum(sigma, sigma_floor))
    return theta_next, tilde


def accel_update(
    state: SolverState,
    u_batch: np.ndarray,
    lnH: np.ndarray,
    J: np.ndarray,
    config: SolverConfig,
) -> tuple[SolverState, float]:
    """One accelerated iteration for both policy sides; returns (state, s_i).

    Both sides carry independent momentum points.  The step accumulators are
    advanced exactly once per iteration, using the noise strength estimated
    from this batch's costs.
    """
    s_i, sigma_max = noise_strength(J, state.sigma_max_running)
    a_next, A_next = step_size_advance(state.a_i, state.A_i, s_i, config.alpha, config.gamma)
    c_plus, c_minus = partition_clusters(lnH)

    theta_plus, tilde_plus = state.theta_plus, state.theta_tilde_plus
    if c_plus.size:
        g = md_gradient(theta_plus, u_batch, lnH, c_plus)
        theta_plus, tilde_plus = agd_plus_step(
            theta_plus, tilde_plus, *g, state.a_i, state.A_i, a_next, A_next,
            sigma_floor=config.sigma_floor,
        )
    theta_minus, tilde_minus = state.theta_minus, state.theta_tilde_minus
    if c_minus.size:
        g = md_gradient(theta_minus, u_batch, -np.asarray(lnH), c_minus)
        theta_minus, tilde_minus = agd_plus_step(
            theta_minus, tilde_minus, *g, state.a_i, state.A_i, a_next, A_next,
            sigma_floor=config.sigma_floor,
        )
    new_state = replace(
        state,
        theta_plus=theta_plus,
        theta_minus=theta_minus,
        theta_tilde_plus=tilde_plus,
        theta_tilde_minus=tilde_minus,
        a_i=a_next,
        A_i=A_next,
        sigma_max_running=sigma_max,
        iteration=state.iteration + 1,
    )
    return new_state, s_i


def warm_start(
    theta_star: PolicyParams,
    prior: PolicyParams,
    a_prv: float,
    eta: float,
    alpha: float,
) -> tuple[PolicyParams, float, float]:
    """Time-shifted blend of the previous optimum into the prior, plus the
    warm step accumulators: a1 interpolates alpha with the previous final
    step and A1 is read off the triangular schedule at the implied iteration.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    horizon = prior.horizon
    mu = prior.mu.copy()
    sigma = prior.sigma.copy()
    if horizon > 1:
        mu[:, : horizon - 1] = (1.0 - eta) * prior.mu[:, : horizon - 1] + eta * theta_star.mu[:, 1:]
        sigma[:, : horizon - 1] = (1.0 - eta) * prior.sigma[:, : horizon - 1] + eta * theta_star.sigma[:, 1:]
    a1 = (1.0 - eta) * alpha + eta * a_prv
    A1 = 0.5 * a1 * (a1 / alpha + 1.0)
    return PolicyParams(mu, sigma), a1, A1


def _iteration_rng(seed: int, step: int, iteration: int) -> np.random.Generator:
    """Counter-based stream: outcomes never depend on evaluation parallelism."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step, iteration)))


def _evaluate_costs(env: EnvSpec, x_t: np.ndarray, u_squashed: np.ndarray, threads: int) -> np.ndarray:
    """Rollout costs for all candidates, optionally chunked across threads.

    Chunks are indexed slices reduced into a preallocated array, so the
    result is bit-identical for any thread count.
    """
    n = u_squashed.shape[0]
    if threads <= 1 or n < 2 * threads:
        return rollout_batch(env, x_t, u_squashed)
    J = np.empty(n)
    bounds = np.linspace(0, n, threads + 1).astype(int)

    def work(lo: int, hi: int) -> None:
        J[lo:hi] = rollout_batch(env, x_t, u_squashed[lo:hi])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(work, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        for f in futures:
            f.result()
    return J


def _initial_state(
    config: SolverConfig,
    action_dim: int,
    prev: SolverState | None,
) -> SolverState:
    prior = standard_prior(action_dim, config.horizon)
    if prev is None:
        theta1, a1, A1 = warm_start(prior, prior, config.alpha, 0.0, config.alpha)
        minus1 = prior
    else:
        theta1, a1, A1 = warm_start(prev.theta_plus, prior, prev.a_i, config.eta, config.alpha)
        if prev.theta_minus is not None:
            minus1, _, _ = warm_start(prev.theta_minus, prior, prev.a_i, config.eta, config.alpha)
        else:
            minus1 = prior
    return SolverState(
        theta_plus=theta1,
        theta_minus=minus1,
        theta_tilde_plus=theta1,
        theta_tilde_minus=minus1,
        a_i=a1,
        A_i=A1,
        sigma_max_running=0.0,
        iteration=1,
    )


def solve(
    env: EnvSpec,
    x_t: np.ndarray,
    config: SolverConfig,
    variant: str = "accel",
    prev: SolverState | None = None,
    seed: int = 0,
    step: int = 0,
) -> tuple[ControlResult, SolverState]:
    """Optimize one control step and return the first squashed action.

    Iterates sample -> rollout -> weight -> update until max_iterations, or
    until starting another iteration would be expected (from the running mean
    iteration time) to exceed the wall-clock deadline.  The first iteration
    always runs.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown solver variant {variant!r}, expected one of {VARIANTS}")
    x_t = np.asarray(x_t, dtype=float)
    state = _initial_state(config, env.action_dim, prev)
    wcfg = config.weights

    start = time.monotonic()
    iter_times: list[float] = []
    cost_trace: list[float] = []
    best = math.inf
    s_final = 0.0
    positive_updates = 0
    all_zero_flag = False
    nonfinite_total = 0

    for i in range(1, config.max_iterations + 1):
        if iter_times:
            mean_t = sum(iter_times) / len(iter_times)
            if (time.monotonic() - start) + mean_t > config.deadline:
                break
        t0 = time.monotonic()
        rng = _iteration_rng(seed, step, i)

        if variant in ("reject", "accel"):
            u_batch = compose_and_sample(
                state.theta_plus, state.theta_minus,
                config.n_oversample, config.n_candidates, config.kappa, rng,
            )
        else:
            u_batch = sample_batch(state.theta_plus, config.n_candidates, rng)
        u_sq = squash(u_batch, env.action_low, env.action_high)
        J = _evaluate_costs(env, x_t, u_sq, config.rollout_threads)

        finite = np.isfinite(J)
        if not finite.all():
            nonfinite_total += int((~finite).sum())
            ceiling = J[finite].max() if finite.any() else 0.0
            J = np.where(finite, J, ceiling + config.nonfinite_penalty)
        best = min(best, float(J.min()))
        cost_trace.append(float(J.min()))

        if variant == "forward":
            w = forward_weights(J, wcfg)
            theta, zero = forward_update(
                state.theta_plus, u_batch, w, config.alpha, config.sigma_floor
            )
            all_zero_flag |= zero
            if not zero:
                positive_updates += 1
            state = replace(state, theta_plus=theta, iteration=state.iteration + 1)
        elif variant == "reverse":
            lnH = signed_log_weights(J, wcfg)
            if np.any(lnH != 0.0):
                theta = reverse_update(
                    state.theta_plus, u_batch, lnH, config.alpha,
                    sigma_floor=config.sigma_floor,
                )
                positive_updates += 1
            else:
                theta = state.theta_plus
            state = replace(state, theta_plus=theta, iteration=state.iteration + 1)
        elif variant == "reject":
            lnH = signed_log_weights(J, wcfg)
            if partition_clusters(lnH)[0].size:
                positive_updates += 1
            state = reject_update(state, u_batch, lnH, config.alpha, config.sigma_floor)
        else:  # accel
            lnH = signed_log_weights(J, wcfg)
            if partition_clusters(lnH)[0].size:
                positive_updates += 1
            state, s_final = accel_update(state, u_batch, lnH, J, config)

        iter_times.append(time.monotonic() - t0)

    u_first = squash(state.theta_plus.mu, env.action_low, env.action_high)[:, 0]
    result = ControlResult(
        u=u_first,
        iterations=len(iter_times),
        best_cost=best,
        wall_time=time.monotonic() - start,
        noise_strength_final=s_final,
        iteration_times=tuple(iter_times),
        cost_trace=tuple(cost_trace),
        no_positive_update=(positive_updates == 0),
        all_zero_weights=all_zero_flag,
        nonfinite_candidates=nonfinite_total,
    )
    return result, state
