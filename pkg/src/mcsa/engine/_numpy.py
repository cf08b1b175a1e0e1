"""Pure-numpy engine backend.

Vectorized twin of the numba backend: identical function signatures and an
identical random-draw protocol (same generator methods, same block shapes,
same order), so both backends consume the same Philox stream and agree to
floating-point accumulation order.
"""

from __future__ import annotations

import math

import numpy as np

from ._codes import (
    METHOD_ELBO,
    METHOD_JSA,
    METHOD_MSC,
    METHOD_MSCRB,
    METHOD_PMCSA,
    OPT_ADAM,
    OPT_MOMENTUM,
    OPT_NESTEROV,
    OPT_SGD,
    SCHED_CONSTANT,
    SCHED_INV_SQRT,
)

_LOG_2PI = math.log(2.0 * math.pi)


def _diag_logpdf(z, mean, log_sigma):
    x = (z - mean) * np.exp(-log_sigma)
    return np.sum(-0.5 * _LOG_2PI - log_sigma - 0.5 * x * x, axis=-1)


def _t_logpdf(z, loc, scale, df):
    const = (math.lgamma((df + 1.0) / 2.0) - math.lgamma(df / 2.0)
             - 0.5 * math.log(df * math.pi))
    x = (z - loc) / scale
    return np.sum(const - np.log(scale) - 0.5 * (df + 1.0) * np.log1p(x * x / df),
                  axis=-1)


def _mix_logpdf(z, q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha):
    lq = _diag_logpdf(z, q_mean, q_log_sigma)
    if alpha >= 1.0:
        return lq
    lt = _t_logpdf(z, t_loc, t_scale, t_df)
    return np.logaddexp(math.log(alpha) + lq, math.log1p(-alpha) + lt)


def _target_logpdf(z, p_mean, p_chol, p_logdet):
    d = p_mean.size
    delta = z.reshape(-1, d) - p_mean
    y = np.linalg.solve(p_chol, delta.T)
    return (-0.5 * np.sum(y * y, axis=0) - 0.5 * d * _LOG_2PI
            - 0.5 * p_logdet).reshape(z.shape[:-1])


def _target_grad(z, p_mean, p_chol):
    d = p_mean.size
    delta = z.reshape(-1, d) - p_mean
    y = np.linalg.solve(p_chol, delta.T)
    return (-np.linalg.solve(p_chol.T, y).T).reshape(z.shape)


def _mix_draws(rng, shape, q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha):
    """Draw proposals of the given leading shape from the defensive mixture.

    Protocol (must match the numba backend exactly): component uniforms,
    then the Gaussian block, then the t block (skipped when alpha >= 1).
    """
    d = q_mean.size
    comp = rng.random(shape)
    eps = rng.standard_normal(shape + (d,))
    z = q_mean + np.exp(q_log_sigma) * eps
    if alpha < 1.0:
        tv = rng.standard_t(t_df, shape + (d,))
        z_tail = t_loc + t_scale * tv
        z = np.where((comp < alpha)[..., None], z, z_tail)
    return z


def _score(z, q_mean, q_log_sigma):
    sigma = np.exp(q_log_sigma)
    r = (z - q_mean) / sigma
    return np.concatenate([r / sigma, r * r - 1.0], axis=-1)


def _kl_to_diag(p_mean, p_cov_diag, p_logdet, q_mean, q_log_sigma):
    var_q = np.exp(2.0 * q_log_sigma)
    return 0.5 * (np.sum((p_cov_diag + (p_mean - q_mean) ** 2) / var_q)
                  - p_mean.size + np.sum(2.0 * q_log_sigma) - p_logdet)


def _gamma_at(sched_id, gamma, t):
    if sched_id == SCHED_CONSTANT:
        return gamma
    if sched_id == SCHED_INV_SQRT:
        return gamma / math.sqrt(t)
    return gamma / t


def run_chain(rng, method_id, n_budget, rec_points,
              p_mean, p_chol, p_cov_diag, p_logdet,
              q_mean0, q_log_sigma0,
              t_loc, t_scale, t_df, alpha,
              opt_id, sched_id, gamma, beta, beta1, beta2, adam_eps,
              diverge_kl, record_lambda):
    """One full optimization run; records closed-form KL (and optionally the
    parameters) at the iterations listed in ``rec_points`` (first entry 0,
    last entry T). Returns (kls, accept_rates, lambdas, diverged_at)."""
    d = p_mean.size
    n_rec = rec_points.shape[0]
    t_total = int(rec_points[-1])
    kls = np.full(n_rec, np.nan)
    accs = np.full(n_rec, np.nan)
    lambdas = np.zeros((n_rec if record_lambda else 0, 2 * d))
    diverged_at = np.int64(-1)

    q_mean = q_mean0.copy()
    q_log_sigma = q_log_sigma0.copy()

    # chain state
    if method_id in (METHOD_MSC, METHOD_MSCRB, METHOD_JSA):
        state = _mix_draws(rng, (1,), q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha)[0]
    elif method_id == METHOD_PMCSA:
        state = _mix_draws(rng, (n_budget,), q_mean, q_log_sigma, t_loc, t_scale,
                           t_df, alpha)
    else:
        state = np.zeros((0, d))

    vel = np.zeros(2 * d)
    adam_m = np.zeros(2 * d)
    adam_v = np.zeros(2 * d)

    rec_k = 0
    if rec_points[0] == 0:
        kls[0] = _kl_to_diag(p_mean, p_cov_diag, p_logdet, q_mean, q_log_sigma)
        if record_lambda:
            lambdas[0, :d] = q_mean
            lambdas[0, d:] = q_log_sigma
        rec_k = 1

    acc_count = 0
    acc_total = 0

    for t in range(1, t_total + 1):
        if method_id in (METHOD_MSC, METHOD_MSCRB):
            m = n_budget - 1
            props = _mix_draws(rng, (m,), q_mean, q_log_sigma, t_loc, t_scale,
                               t_df, alpha)
            cand = np.concatenate([state[None, :], props], axis=0)
            logw = (_target_logpdf(cand, p_mean, p_chol, p_logdet)
                    - _mix_logpdf(cand, q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha))
            mx = logw.max()
            w = np.exp(logw - mx)
            wbar = w / w.sum()
            u = rng.random()
            sel = int(min(np.searchsorted(np.cumsum(wbar), u, side="right"), m))
            scores = _score(cand, q_mean, q_log_sigma)
            if method_id == METHOD_MSC:
                grad = -scores[sel]
            else:
                grad = -(wbar[:, None] * scores).sum(axis=0)
            state = cand[sel]
            acc_count += sel != 0
            acc_total += 1
        elif method_id == METHOD_JSA:
            props = _mix_draws(rng, (n_budget,), q_mean, q_log_sigma, t_loc, t_scale,
                               t_df, alpha)
            u_acc = rng.random(n_budget)
            logw_props = (_target_logpdf(props, p_mean, p_chol, p_logdet)
                          - _mix_logpdf(props, q_mean, q_log_sigma, t_loc, t_scale,
                                        t_df, alpha))
            logw_cur = (_target_logpdf(state[None, :], p_mean, p_chol, p_logdet)
                        - _mix_logpdf(state[None, :], q_mean, q_log_sigma, t_loc,
                                      t_scale, t_df, alpha))[0]
            grad = np.zeros(2 * d)
            for n in range(n_budget):
                if u_acc[n] < math.exp(min(0.0, logw_props[n] - logw_cur)):
                    state = props[n]
                    logw_cur = logw_props[n]
                    acc_count += 1
                grad -= _score(state, q_mean, q_log_sigma)
                acc_total += 1
            grad /= n_budget
        elif method_id == METHOD_PMCSA:
            props = _mix_draws(rng, (n_budget,), q_mean, q_log_sigma, t_loc, t_scale,
                               t_df, alpha)
            u_acc = rng.random(n_budget)
            logw_props = (_target_logpdf(props, p_mean, p_chol, p_logdet)
                          - _mix_logpdf(props, q_mean, q_log_sigma, t_loc, t_scale,
                                        t_df, alpha))
            logw_prev = (_target_logpdf(state, p_mean, p_chol, p_logdet)
                         - _mix_logpdf(state, q_mean, q_log_sigma, t_loc, t_scale,
                                       t_df, alpha))
            accept = u_acc < np.exp(np.minimum(0.0, logw_props - logw_prev))
            state = np.where(accept[:, None], props, state)
            grad = -_score(state, q_mean, q_log_sigma).mean(axis=0)
            acc_count += int(accept.sum())
            acc_total += n_budget
        else:  # ELBO
            eps = rng.standard_normal((n_budget, d))
            sigma = np.exp(q_log_sigma)
            z = q_mean + sigma * eps
            diff = _target_grad(z, p_mean, p_chol) + (z - q_mean) / sigma**2
            grad = np.concatenate([-diff.mean(axis=0),
                                   -(diff * sigma * eps).mean(axis=0)])

        # optimizer update
        gamma_t = _gamma_at(sched_id, gamma, t)
        lam = np.concatenate([q_mean, q_log_sigma])
        if opt_id == OPT_SGD:
            lam = lam - gamma_t * grad
        elif opt_id == OPT_MOMENTUM:
            vel = beta * vel + grad
            lam = lam - gamma_t * vel
        elif opt_id == OPT_NESTEROV:
            vel = beta * vel + grad
            lam = lam - gamma_t * (grad + beta * vel)
        else:  # adam
            adam_m = beta1 * adam_m + (1.0 - beta1) * grad
            adam_v = beta2 * adam_v + (1.0 - beta2) * grad * grad
            m_hat = adam_m / (1.0 - beta1**t)
            v_hat = adam_v / (1.0 - beta2**t)
            lam = lam - gamma_t * m_hat / (np.sqrt(v_hat) + adam_eps)
        q_mean = lam[:d]
        q_log_sigma = lam[d:]

        kl = _kl_to_diag(p_mean, p_cov_diag, p_logdet, q_mean, q_log_sigma)
        if not np.all(np.isfinite(lam)) or not math.isfinite(kl) or kl > diverge_kl:
            diverged_at = np.int64(t)
            if rec_k < n_rec:
                kls[rec_k] = kl if math.isfinite(kl) else np.inf
                accs[rec_k] = acc_count / acc_total if acc_total > 0 else np.nan
                if record_lambda:
                    lambdas[rec_k, :d] = q_mean
                    lambdas[rec_k, d:] = q_log_sigma
                rec_k += 1
            break

        if rec_k < n_rec and t == rec_points[rec_k]:
            kls[rec_k] = kl
            accs[rec_k] = acc_count / acc_total if acc_total > 0 else np.nan
            if record_lambda:
                lambdas[rec_k, :d] = q_mean
                lambdas[rec_k, d:] = q_log_sigma
            rec_k += 1
            acc_count = 0
            acc_total = 0

    return kls, accs, lambdas, diverged_at


def gradient_replicates(rng, method_id, n_budget, n_reps, z_prev,
                        p_mean, p_chol, p_cov_diag, p_logdet,
                        q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha):
    """n_reps independent one-step gradient estimates at a frozen proposal.

    MSC/MSC-RB/JSA replicates start from ``z_prev``; PMCSA replicates draw a
    fresh target-sampled chain set each (protocol: the start block first,
    then the proposal blocks).
    """
    d = p_mean.size
    grads = np.empty((n_reps, 2 * d))

    if method_id == METHOD_PMCSA:
        eps0 = rng.standard_normal((n_reps, n_budget, d))
        starts = p_mean + eps0 @ p_chol.T
        props = _mix_draws(rng, (n_reps, n_budget), q_mean, q_log_sigma, t_loc,
                           t_scale, t_df, alpha)
        u_acc = rng.random((n_reps, n_budget))
        logw_prev = (_target_logpdf(starts, p_mean, p_chol, p_logdet)
                     - _mix_logpdf(starts, q_mean, q_log_sigma, t_loc, t_scale,
                                   t_df, alpha))
        logw_props = (_target_logpdf(props, p_mean, p_chol, p_logdet)
                      - _mix_logpdf(props, q_mean, q_log_sigma, t_loc, t_scale,
                                    t_df, alpha))
        accept = u_acc < np.exp(np.minimum(0.0, logw_props - logw_prev))
        z = np.where(accept[..., None], props, starts)
        grads[:] = -_score(z, q_mean, q_log_sigma).mean(axis=1)
        return grads

    if method_id in (METHOD_MSC, METHOD_MSCRB):
        m = n_budget - 1
        props = _mix_draws(rng, (n_reps, m), q_mean, q_log_sigma, t_loc, t_scale,
                           t_df, alpha)
        u_sel = rng.random(n_reps)
        cand = np.concatenate([np.broadcast_to(z_prev, (n_reps, 1, d)), props], axis=1)
        logw = (_target_logpdf(cand, p_mean, p_chol, p_logdet)
                - _mix_logpdf(cand, q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha))
        mx = logw.max(axis=1, keepdims=True)
        w = np.exp(logw - mx)
        wbar = w / w.sum(axis=1, keepdims=True)
        scores = _score(cand, q_mean, q_log_sigma)
        if method_id == METHOD_MSC:
            sel = np.minimum((np.cumsum(wbar, axis=1) < u_sel[:, None]).sum(axis=1), m)
            grads[:] = -scores[np.arange(n_reps), sel]
        else:
            grads[:] = -(wbar[..., None] * scores).sum(axis=1)
        return grads

    if method_id == METHOD_JSA:
        props = _mix_draws(rng, (n_reps, n_budget), q_mean, q_log_sigma, t_loc,
                           t_scale, t_df, alpha)
        u_acc = rng.random((n_reps, n_budget))
        logw_props = (_target_logpdf(props, p_mean, p_chol, p_logdet)
                      - _mix_logpdf(props, q_mean, q_log_sigma, t_loc, t_scale,
                                    t_df, alpha))
        logw0 = float(_target_logpdf(z_prev[None, :], p_mean, p_chol, p_logdet)[0]
                      - _mix_logpdf(z_prev[None, :], q_mean, q_log_sigma, t_loc,
                                    t_scale, t_df, alpha)[0])
        for r in range(n_reps):
            z = z_prev
            logw_cur = logw0
            acc = np.zeros(2 * d)
            for n in range(n_budget):
                if u_acc[r, n] < math.exp(min(0.0, logw_props[r, n] - logw_cur)):
                    z = props[r, n]
                    logw_cur = logw_props[r, n]
                acc -= _score(z, q_mean, q_log_sigma)
            grads[r] = acc / n_budget
        return grads

    raise ValueError(f"unsupported method code {method_id}")


def chain_gradients(rng, method_id, n_budget, n_steps, init_states,
                    p_mean, p_chol, p_cov_diag, p_logdet,
                    q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha):
    """Evolve one chain at frozen parameters for n_steps; return the per-step
    gradient estimates (n_steps, 2d). ``init_states`` is (1, d) for the
    single-chain methods and (N, d) for PMCSA."""
    d = p_mean.size
    grads = np.empty((n_steps, 2 * d))
    state = init_states.copy()

    for t in range(n_steps):
        if method_id in (METHOD_MSC, METHOD_MSCRB):
            m = n_budget - 1
            props = _mix_draws(rng, (m,), q_mean, q_log_sigma, t_loc, t_scale,
                               t_df, alpha)
            cand = np.concatenate([state, props], axis=0)
            logw = (_target_logpdf(cand, p_mean, p_chol, p_logdet)
                    - _mix_logpdf(cand, q_mean, q_log_sigma, t_loc, t_scale, t_df,
                                  alpha))
            mx = logw.max()
            w = np.exp(logw - mx)
            wbar = w / w.sum()
            u = rng.random()
            sel = int(min(np.searchsorted(np.cumsum(wbar), u, side="right"), m))
            scores = _score(cand, q_mean, q_log_sigma)
            if method_id == METHOD_MSC:
                grads[t] = -scores[sel]
            else:
                grads[t] = -(wbar[:, None] * scores).sum(axis=0)
            state = cand[sel][None, :]
        elif method_id == METHOD_JSA:
            props = _mix_draws(rng, (n_budget,), q_mean, q_log_sigma, t_loc,
                               t_scale, t_df, alpha)
            u_acc = rng.random(n_budget)
            logw_props = (_target_logpdf(props, p_mean, p_chol, p_logdet)
                          - _mix_logpdf(props, q_mean, q_log_sigma, t_loc, t_scale,
                                        t_df, alpha))
            logw_cur = (_target_logpdf(state, p_mean, p_chol, p_logdet)
                        - _mix_logpdf(state, q_mean, q_log_sigma, t_loc, t_scale,
                                      t_df, alpha))[0]
            z = state[0]
            acc = np.zeros(2 * d)
            for n in range(n_budget):
                if u_acc[n] < math.exp(min(0.0, logw_props[n] - logw_cur)):
                    z = props[n]
                    logw_cur = logw_props[n]
                acc -= _score(z, q_mean, q_log_sigma)
            grads[t] = acc / n_budget
            state = z[None, :]
        elif method_id == METHOD_PMCSA:
            props = _mix_draws(rng, (n_budget,), q_mean, q_log_sigma, t_loc,
                               t_scale, t_df, alpha)
            u_acc = rng.random(n_budget)
            logw_props = (_target_logpdf(props, p_mean, p_chol, p_logdet)
                          - _mix_logpdf(props, q_mean, q_log_sigma, t_loc, t_scale,
                                        t_df, alpha))
            logw_prev = (_target_logpdf(state, p_mean, p_chol, p_logdet)
                         - _mix_logpdf(state, q_mean, q_log_sigma, t_loc, t_scale,
                                       t_df, alpha))
            accept = u_acc < np.exp(np.minimum(0.0, logw_props - logw_prev))
            state = np.where(accept[:, None], props, state)
            grads[t] = -_score(state, q_mean, q_log_sigma).mean(axis=0)
        else:
            raise ValueError(f"unsupported method code {method_id}")

    return grads


def replicated_variance(rng, method_id, n_budget, lambda_trace, n_chains,
                        p_mean, p_chol, p_cov_diag, p_logdet,
                        t_loc, t_scale, t_df, alpha):
    """Trace variance across replicate chains stepped once per trace entry.

    Chains are initialized from the defensive mixture at the first trace
    entry; per entry, each chain produces one gradient estimate and the
    variance across chains is recorded.
    """
    d = p_mean.size
    k_len = lambda_trace.shape[0]
    variances = np.empty(k_len)

    q_mean = lambda_trace[0, :d]
    q_log_sigma = lambda_trace[0, d:]
    if method_id == METHOD_PMCSA:
        states = _mix_draws(rng, (n_chains, n_budget), q_mean, q_log_sigma,
                            t_loc, t_scale, t_df, alpha)
    else:
        states = _mix_draws(rng, (n_chains,), q_mean, q_log_sigma, t_loc, t_scale,
                            t_df, alpha)

    for k in range(k_len):
        q_mean = lambda_trace[k, :d]
        q_log_sigma = lambda_trace[k, d:]
        if method_id == METHOD_PMCSA:
            props = _mix_draws(rng, (n_chains, n_budget), q_mean, q_log_sigma,
                               t_loc, t_scale, t_df, alpha)
            u_acc = rng.random((n_chains, n_budget))
            logw_prev = (_target_logpdf(states, p_mean, p_chol, p_logdet)
                         - _mix_logpdf(states, q_mean, q_log_sigma, t_loc, t_scale,
                                       t_df, alpha))
            logw_props = (_target_logpdf(props, p_mean, p_chol, p_logdet)
                          - _mix_logpdf(props, q_mean, q_log_sigma, t_loc, t_scale,
                                        t_df, alpha))
            accept = u_acc < np.exp(np.minimum(0.0, logw_props - logw_prev))
            states = np.where(accept[..., None], props, states)
            grads = -_score(states, q_mean, q_log_sigma).mean(axis=1)
        elif method_id in (METHOD_MSC, METHOD_MSCRB):
            m = n_budget - 1
            props = _mix_draws(rng, (n_chains, m), q_mean, q_log_sigma, t_loc,
                               t_scale, t_df, alpha)
            u_sel = rng.random(n_chains)
            cand = np.concatenate([states[:, None, :], props], axis=1)
            logw = (_target_logpdf(cand, p_mean, p_chol, p_logdet)
                    - _mix_logpdf(cand, q_mean, q_log_sigma, t_loc, t_scale, t_df,
                                  alpha))
            mx = logw.max(axis=1, keepdims=True)
            w = np.exp(logw - mx)
            wbar = w / w.sum(axis=1, keepdims=True)
            scores = _score(cand, q_mean, q_log_sigma)
            sel = np.minimum((np.cumsum(wbar, axis=1) < u_sel[:, None]).sum(axis=1), m)
            if method_id == METHOD_MSC:
                grads = -scores[np.arange(n_chains), sel]
            else:
                grads = -(wbar[..., None] * scores).sum(axis=1)
            states = cand[np.arange(n_chains), sel]
        else:  # JSA
            props = _mix_draws(rng, (n_chains, n_budget), q_mean, q_log_sigma,
                               t_loc, t_scale, t_df, alpha)
            u_acc = rng.random((n_chains, n_budget))
            logw_props = (_target_logpdf(props, p_mean, p_chol, p_logdet)
                          - _mix_logpdf(props, q_mean, q_log_sigma, t_loc, t_scale,
                                        t_df, alpha))
            logw_cur = (_target_logpdf(states, p_mean, p_chol, p_logdet)
                        - _mix_logpdf(states, q_mean, q_log_sigma, t_loc, t_scale,
                                      t_df, alpha))
            grads = np.zeros((n_chains, 2 * d))
            for c in range(n_chains):
                z = states[c]
                lw = logw_cur[c]
                for n in range(n_budget):
                    if u_acc[c, n] < math.exp(min(0.0, logw_props[c, n] - lw)):
                        z = props[c, n]
                        lw = logw_props[c, n]
                    grads[c] -= _score(z, q_mean, q_log_sigma)
                grads[c] /= n_budget
                states[c] = z
        variances[k] = float(np.sum(grads.var(axis=0, ddof=1)))

    return variances
