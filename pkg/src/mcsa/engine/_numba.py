"""Numba engine backend.

Loop-style twin of the numpy backend compiled with ``@njit``. Draws random
blocks with the same generator methods, shapes, and order as the numpy
backend, so both consume identical Philox streams; floating-point results
agree to accumulation-order accuracy (numpy reduces pairwise / via BLAS,
these loops reduce linearly).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

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
_JIT = dict(cache=True, nogil=True, fastmath=False)


@njit(**_JIT)
def _diag_logpdf_one(z, mean, log_sigma):
    total = 0.0
    for i in range(mean.size):
        x = (z[i] - mean[i]) * math.exp(-log_sigma[i])
        total += -0.5 * _LOG_2PI - log_sigma[i] - 0.5 * x * x
    return total


@njit(**_JIT)
def _t_const(df):
    return (math.lgamma((df + 1.0) / 2.0) - math.lgamma(df / 2.0)
            - 0.5 * math.log(df * math.pi))


@njit(**_JIT)
def _t_logpdf_one(z, loc, scale, df, const):
    total = 0.0
    for i in range(loc.size):
        x = (z[i] - loc[i]) / scale[i]
        total += const - math.log(scale[i]) - 0.5 * (df + 1.0) * math.log1p(x * x / df)
    return total


@njit(**_JIT)
def _logaddexp(a, b):
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


@njit(**_JIT)
def _mix_logpdf_one(z, q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha, t_const):
    lq = _diag_logpdf_one(z, q_mean, q_log_sigma)
    if alpha >= 1.0:
        return lq
    lt = _t_logpdf_one(z, t_loc, t_scale, t_df, t_const)
    return _logaddexp(math.log(alpha) + lq, math.log1p(-alpha) + lt)


@njit(**_JIT)
def _target_logpdf_one(z, p_mean, p_chol, p_logdet, work):
    d = p_mean.size
    for i in range(d):
        acc = z[i] - p_mean[i]
        for j in range(i):
            acc -= p_chol[i, j] * work[j]
        work[i] = acc / p_chol[i, i]
    ss = 0.0
    for i in range(d):
        ss += work[i] * work[i]
    return -0.5 * ss - 0.5 * d * _LOG_2PI - 0.5 * p_logdet


@njit(**_JIT)
def _target_grad_one(z, p_mean, p_chol, out, work):
    d = p_mean.size
    for i in range(d):
        acc = z[i] - p_mean[i]
        for j in range(i):
            acc -= p_chol[i, j] * work[j]
        work[i] = acc / p_chol[i, i]
    for i in range(d - 1, -1, -1):
        acc = work[i]
        for j in range(i + 1, d):
            acc -= p_chol[j, i] * out[j]
        out[i] = acc / p_chol[i, i]
    for i in range(d):
        out[i] = -out[i]


@njit(**_JIT)
def _log_weight_one(z, p_mean, p_chol, p_logdet, q_mean, q_log_sigma,
                    t_loc, t_scale, t_df, alpha, work, t_const):
    return (_target_logpdf_one(z, p_mean, p_chol, p_logdet, work)
            - _mix_logpdf_one(z, q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha,
                              t_const))


@njit(**_JIT)
def _mix_draws_flat(rng, n, q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha):
    """n mixture draws, (n, d); protocol matches the numpy backend."""
    d = q_mean.size
    comp = rng.random(n)
    eps = rng.standard_normal((n, d))
    out = np.empty((n, d))
    for i in range(n):
        for j in range(d):
            out[i, j] = q_mean[j] + math.exp(q_log_sigma[j]) * eps[i, j]
    if alpha < 1.0:
        tv = rng.standard_t(t_df, (n, d))
        for i in range(n):
            if comp[i] >= alpha:
                for j in range(d):
                    out[i, j] = t_loc[j] + t_scale[j] * tv[i, j]
    return out


@njit(**_JIT)
def _mix_draws_block(rng, n_rows, n_cols, q_mean, q_log_sigma, t_loc, t_scale,
                     t_df, alpha):
    """(n_rows, n_cols, d) mixture draws with the replicate-block protocol."""
    d = q_mean.size
    comp = rng.random((n_rows, n_cols))
    eps = rng.standard_normal((n_rows, n_cols, d))
    out = np.empty((n_rows, n_cols, d))
    for r in range(n_rows):
        for c in range(n_cols):
            for j in range(d):
                out[r, c, j] = q_mean[j] + math.exp(q_log_sigma[j]) * eps[r, c, j]
    if alpha < 1.0:
        tv = rng.standard_t(t_df, (n_rows, n_cols, d))
        for r in range(n_rows):
            for c in range(n_cols):
                if comp[r, c] >= alpha:
                    for j in range(d):
                        out[r, c, j] = t_loc[j] + t_scale[j] * tv[r, c, j]
    return out


@njit(**_JIT)
def _neg_score_into(z, q_mean, q_log_sigma, weight, grad):
    """grad -= weight * score(z); score = ((z-m)/s^2, ((z-m)/s)^2 - 1)."""
    d = q_mean.size
    for j in range(d):
        sigma = math.exp(q_log_sigma[j])
        r = (z[j] - q_mean[j]) / sigma
        grad[j] -= weight * r / sigma
        grad[d + j] -= weight * (r * r - 1.0)


@njit(**_JIT)
def _kl_to_diag(p_mean, p_cov_diag, p_logdet, q_mean, q_log_sigma):
    d = p_mean.size
    total = 0.0
    for i in range(d):
        var_q = math.exp(2.0 * q_log_sigma[i])
        delta = p_mean[i] - q_mean[i]
        total += (p_cov_diag[i] + delta * delta) / var_q + 2.0 * q_log_sigma[i]
    return 0.5 * (total - d - p_logdet)


@njit(**_JIT)
def _gamma_at(sched_id, gamma, t):
    if sched_id == SCHED_CONSTANT:
        return gamma
    if sched_id == SCHED_INV_SQRT:
        return gamma / math.sqrt(t)
    return gamma / t


@njit(**_JIT)
def run_chain(rng, method_id, n_budget, rec_points,
              p_mean, p_chol, p_cov_diag, p_logdet,
              q_mean0, q_log_sigma0,
              t_loc, t_scale, t_df, alpha,
              opt_id, sched_id, gamma, beta, beta1, beta2, adam_eps,
              diverge_kl, record_lambda):
    t_const = _t_const(t_df)
    d = p_mean.size
    n_rec = rec_points.shape[0]
    t_total = int(rec_points[-1])
    kls = np.full(n_rec, np.nan)
    accs = np.full(n_rec, np.nan)
    n_lam = n_rec if record_lambda else 0
    lambdas = np.zeros((n_lam, 2 * d))
    diverged_at = np.int64(-1)

    q_mean = q_mean0.copy()
    q_log_sigma = q_log_sigma0.copy()
    work = np.empty(d)

    if method_id == METHOD_PMCSA:
        state = _mix_draws_flat(rng, n_budget, q_mean, q_log_sigma, t_loc, t_scale,
                                t_df, alpha)
    elif method_id == METHOD_ELBO:
        state = np.zeros((1, d))
    else:
        state = _mix_draws_flat(rng, 1, q_mean, q_log_sigma, t_loc, t_scale,
                                t_df, alpha)

    vel = np.zeros(2 * d)
    adam_m = np.zeros(2 * d)
    adam_v = np.zeros(2 * d)
    grad = np.zeros(2 * d)

    rec_k = 0
    if rec_points[0] == 0:
        kls[0] = _kl_to_diag(p_mean, p_cov_diag, p_logdet, q_mean, q_log_sigma)
        if record_lambda:
            for j in range(d):
                lambdas[0, j] = q_mean[j]
                lambdas[0, d + j] = q_log_sigma[j]
        rec_k = 1

    acc_count = 0
    acc_total = 0
    grad_elbo = np.empty(d)

    for t in range(1, t_total + 1):
        for j in range(2 * d):
            grad[j] = 0.0

        if method_id == METHOD_MSC or method_id == METHOD_MSCRB:
            m = n_budget - 1
            props = _mix_draws_flat(rng, m, q_mean, q_log_sigma, t_loc, t_scale,
                                    t_df, alpha)
            logw = np.empty(m + 1)
            logw[0] = _log_weight_one(state[0], p_mean, p_chol, p_logdet, q_mean,
                                      q_log_sigma, t_loc, t_scale, t_df, alpha, work, t_const)
            for i in range(m):
                logw[i + 1] = _log_weight_one(props[i], p_mean, p_chol, p_logdet,
                                              q_mean, q_log_sigma, t_loc, t_scale,
                                              t_df, alpha, work, t_const)
            mx = logw[0]
            for i in range(1, m + 1):
                if logw[i] > mx:
                    mx = logw[i]
            wsum = 0.0
            for i in range(m + 1):
                wsum += math.exp(logw[i] - mx)
            u = rng.random()
            sel = m
            csum = 0.0
            for i in range(m + 1):
                csum += math.exp(logw[i] - mx) / wsum
                if u < csum:
                    sel = i
                    break
            if method_id == METHOD_MSC:
                if sel == 0:
                    _neg_score_into(state[0], q_mean, q_log_sigma, 1.0, grad)
                else:
                    _neg_score_into(props[sel - 1], q_mean, q_log_sigma, 1.0, grad)
            else:
                _neg_score_into(state[0], q_mean, q_log_sigma,
                                math.exp(logw[0] - mx) / wsum, grad)
                for i in range(m):
                    _neg_score_into(props[i], q_mean, q_log_sigma,
                                    math.exp(logw[i + 1] - mx) / wsum, grad)
            if sel != 0:
                for j in range(d):
                    state[0, j] = props[sel - 1, j]
                acc_count += 1
            acc_total += 1
        elif method_id == METHOD_JSA:
            props = _mix_draws_flat(rng, n_budget, q_mean, q_log_sigma, t_loc,
                                    t_scale, t_df, alpha)
            u_acc = rng.random(n_budget)
            logw_cur = _log_weight_one(state[0], p_mean, p_chol, p_logdet, q_mean,
                                       q_log_sigma, t_loc, t_scale, t_df, alpha, work, t_const)
            for n in range(n_budget):
                lw = _log_weight_one(props[n], p_mean, p_chol, p_logdet, q_mean,
                                     q_log_sigma, t_loc, t_scale, t_df, alpha, work, t_const)
                if u_acc[n] < math.exp(min(0.0, lw - logw_cur)):
                    for j in range(d):
                        state[0, j] = props[n, j]
                    logw_cur = lw
                    acc_count += 1
                _neg_score_into(state[0], q_mean, q_log_sigma, 1.0 / n_budget, grad)
                acc_total += 1
        elif method_id == METHOD_PMCSA:
            props = _mix_draws_flat(rng, n_budget, q_mean, q_log_sigma, t_loc,
                                    t_scale, t_df, alpha)
            u_acc = rng.random(n_budget)
            for n in range(n_budget):
                lw_prev = _log_weight_one(state[n], p_mean, p_chol, p_logdet, q_mean,
                                          q_log_sigma, t_loc, t_scale, t_df, alpha,
                                          work, t_const)
                lw_prop = _log_weight_one(props[n], p_mean, p_chol, p_logdet, q_mean,
                                          q_log_sigma, t_loc, t_scale, t_df, alpha,
                                          work, t_const)
                if u_acc[n] < math.exp(min(0.0, lw_prop - lw_prev)):
                    for j in range(d):
                        state[n, j] = props[n, j]
                    acc_count += 1
                _neg_score_into(state[n], q_mean, q_log_sigma, 1.0 / n_budget, grad)
                acc_total += 1
        else:  # ELBO
            eps = rng.standard_normal((n_budget, d))
            z = np.empty(d)
            for n in range(n_budget):
                for j in range(d):
                    z[j] = q_mean[j] + math.exp(q_log_sigma[j]) * eps[n, j]
                _target_grad_one(z, p_mean, p_chol, grad_elbo, work)
                for j in range(d):
                    sigma = math.exp(q_log_sigma[j])
                    diff = grad_elbo[j] + (z[j] - q_mean[j]) / (sigma * sigma)
                    grad[j] -= diff / n_budget
                    grad[d + j] -= diff * sigma * eps[n, j] / n_budget

        gamma_t = _gamma_at(sched_id, gamma, t)
        if opt_id == OPT_SGD:
            for j in range(d):
                q_mean[j] -= gamma_t * grad[j]
                q_log_sigma[j] -= gamma_t * grad[d + j]
        elif opt_id == OPT_MOMENTUM:
            for j in range(2 * d):
                vel[j] = beta * vel[j] + grad[j]
                if j < d:
                    q_mean[j] -= gamma_t * vel[j]
                else:
                    q_log_sigma[j - d] -= gamma_t * vel[j]
        elif opt_id == OPT_NESTEROV:
            for j in range(2 * d):
                vel[j] = beta * vel[j] + grad[j]
                upd = gamma_t * (grad[j] + beta * vel[j])
                if j < d:
                    q_mean[j] -= upd
                else:
                    q_log_sigma[j - d] -= upd
        else:  # adam
            bc1 = 1.0 - beta1**t
            bc2 = 1.0 - beta2**t
            for j in range(2 * d):
                adam_m[j] = beta1 * adam_m[j] + (1.0 - beta1) * grad[j]
                adam_v[j] = beta2 * adam_v[j] + (1.0 - beta2) * grad[j] * grad[j]
                upd = gamma_t * (adam_m[j] / bc1) / (math.sqrt(adam_v[j] / bc2) + adam_eps)
                if j < d:
                    q_mean[j] -= upd
                else:
                    q_log_sigma[j - d] -= upd

        finite = True
        for j in range(d):
            if not (math.isfinite(q_mean[j]) and math.isfinite(q_log_sigma[j])):
                finite = False
                break
        kl = _kl_to_diag(p_mean, p_cov_diag, p_logdet, q_mean, q_log_sigma) \
            if finite else math.inf
        if not finite or not math.isfinite(kl) or kl > diverge_kl:
            diverged_at = np.int64(t)
            if rec_k < n_rec:
                kls[rec_k] = kl if math.isfinite(kl) else math.inf
                accs[rec_k] = acc_count / acc_total if acc_total > 0 else np.nan
                if record_lambda:
                    for j in range(d):
                        lambdas[rec_k, j] = q_mean[j]
                        lambdas[rec_k, d + j] = q_log_sigma[j]
                rec_k += 1
            break

        if rec_k < n_rec and t == rec_points[rec_k]:
            kls[rec_k] = kl
            accs[rec_k] = acc_count / acc_total if acc_total > 0 else np.nan
            if record_lambda:
                for j in range(d):
                    lambdas[rec_k, j] = q_mean[j]
                    lambdas[rec_k, d + j] = q_log_sigma[j]
            rec_k += 1
            acc_count = 0
            acc_total = 0

    return kls, accs, lambdas, diverged_at


@njit(**_JIT)
def gradient_replicates(rng, method_id, n_budget, n_reps, z_prev,
                        p_mean, p_chol, p_cov_diag, p_logdet,
                        q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha):
    t_const = _t_const(t_df)
    d = p_mean.size
    grads = np.zeros((n_reps, 2 * d))
    work = np.empty(d)

    if method_id == METHOD_PMCSA:
        eps0 = rng.standard_normal((n_reps, n_budget, d))
        props = _mix_draws_block(rng, n_reps, n_budget, q_mean, q_log_sigma,
                                 t_loc, t_scale, t_df, alpha)
        u_acc = rng.random((n_reps, n_budget))
        z = np.empty(d)
        for r in range(n_reps):
            for n in range(n_budget):
                for i in range(d):
                    acc = 0.0
                    for j in range(i + 1):
                        acc += p_chol[i, j] * eps0[r, n, j]
                    z[i] = p_mean[i] + acc
                lw_prev = _log_weight_one(z, p_mean, p_chol, p_logdet, q_mean,
                                          q_log_sigma, t_loc, t_scale, t_df, alpha,
                                          work, t_const)
                lw_prop = _log_weight_one(props[r, n], p_mean, p_chol, p_logdet,
                                          q_mean, q_log_sigma, t_loc, t_scale, t_df,
                                          alpha, work, t_const)
                if u_acc[r, n] < math.exp(min(0.0, lw_prop - lw_prev)):
                    _neg_score_into(props[r, n], q_mean, q_log_sigma,
                                    1.0 / n_budget, grads[r])
                else:
                    _neg_score_into(z, q_mean, q_log_sigma, 1.0 / n_budget, grads[r])
        return grads

    if method_id == METHOD_MSC or method_id == METHOD_MSCRB:
        m = n_budget - 1
        props = _mix_draws_block(rng, n_reps, m, q_mean, q_log_sigma, t_loc,
                                 t_scale, t_df, alpha)
        u_sel = rng.random(n_reps)
        logw = np.empty(m + 1)
        logw0 = _log_weight_one(z_prev, p_mean, p_chol, p_logdet, q_mean,
                                q_log_sigma, t_loc, t_scale, t_df, alpha, work, t_const)
        for r in range(n_reps):
            logw[0] = logw0
            for i in range(m):
                logw[i + 1] = _log_weight_one(props[r, i], p_mean, p_chol, p_logdet,
                                              q_mean, q_log_sigma, t_loc, t_scale,
                                              t_df, alpha, work, t_const)
            mx = logw[0]
            for i in range(1, m + 1):
                if logw[i] > mx:
                    mx = logw[i]
            wsum = 0.0
            for i in range(m + 1):
                wsum += math.exp(logw[i] - mx)
            if method_id == METHOD_MSC:
                sel = m
                csum = 0.0
                for i in range(m + 1):
                    csum += math.exp(logw[i] - mx) / wsum
                    if u_sel[r] < csum:
                        sel = i
                        break
                if sel == 0:
                    _neg_score_into(z_prev, q_mean, q_log_sigma, 1.0, grads[r])
                else:
                    _neg_score_into(props[r, sel - 1], q_mean, q_log_sigma, 1.0,
                                    grads[r])
            else:
                _neg_score_into(z_prev, q_mean, q_log_sigma,
                                math.exp(logw[0] - mx) / wsum, grads[r])
                for i in range(m):
                    _neg_score_into(props[r, i], q_mean, q_log_sigma,
                                    math.exp(logw[i + 1] - mx) / wsum, grads[r])
        return grads

    # JSA
    props = _mix_draws_block(rng, n_reps, n_budget, q_mean, q_log_sigma, t_loc,
                             t_scale, t_df, alpha)
    u_acc = rng.random((n_reps, n_budget))
    logw0 = _log_weight_one(z_prev, p_mean, p_chol, p_logdet, q_mean, q_log_sigma,
                            t_loc, t_scale, t_df, alpha, work, t_const)
    z = np.empty(d)
    for r in range(n_reps):
        for j in range(d):
            z[j] = z_prev[j]
        logw_cur = logw0
        for n in range(n_budget):
            lw = _log_weight_one(props[r, n], p_mean, p_chol, p_logdet, q_mean,
                                 q_log_sigma, t_loc, t_scale, t_df, alpha, work, t_const)
            if u_acc[r, n] < math.exp(min(0.0, lw - logw_cur)):
                for j in range(d):
                    z[j] = props[r, n, j]
                logw_cur = lw
            _neg_score_into(z, q_mean, q_log_sigma, 1.0 / n_budget, grads[r])
    return grads


@njit(**_JIT)
def chain_gradients(rng, method_id, n_budget, n_steps, init_states,
                    p_mean, p_chol, p_cov_diag, p_logdet,
                    q_mean, q_log_sigma, t_loc, t_scale, t_df, alpha):
    t_const = _t_const(t_df)
    d = p_mean.size
    grads = np.zeros((n_steps, 2 * d))
    state = init_states.copy()
    work = np.empty(d)

    for t in range(n_steps):
        if method_id == METHOD_MSC or method_id == METHOD_MSCRB:
            m = n_budget - 1
            props = _mix_draws_flat(rng, m, q_mean, q_log_sigma, t_loc, t_scale,
                                    t_df, alpha)
            logw = np.empty(m + 1)
            logw[0] = _log_weight_one(state[0], p_mean, p_chol, p_logdet, q_mean,
                                      q_log_sigma, t_loc, t_scale, t_df, alpha, work, t_const)
            for i in range(m):
                logw[i + 1] = _log_weight_one(props[i], p_mean, p_chol, p_logdet,
                                              q_mean, q_log_sigma, t_loc, t_scale,
                                              t_df, alpha, work, t_const)
            mx = logw[0]
            for i in range(1, m + 1):
                if logw[i] > mx:
                    mx = logw[i]
            wsum = 0.0
            for i in range(m + 1):
                wsum += math.exp(logw[i] - mx)
            u = rng.random()
            sel = m
            csum = 0.0
            for i in range(m + 1):
                csum += math.exp(logw[i] - mx) / wsum
                if u < csum:
                    sel = i
                    break
            if method_id == METHOD_MSC:
                if sel == 0:
                    _neg_score_into(state[0], q_mean, q_log_sigma, 1.0, grads[t])
                else:
                    _neg_score_into(props[sel - 1], q_mean, q_log_sigma, 1.0,
                                    grads[t])
            else:
                _neg_score_into(state[0], q_mean, q_log_sigma,
                                math.exp(logw[0] - mx) / wsum, grads[t])
                for i in range(m):
                    _neg_score_into(props[i], q_mean, q_log_sigma,
                                    math.exp(logw[i + 1] - mx) / wsum, grads[t])
            if sel != 0:
                for j in range(d):
                    state[0, j] = props[sel - 1, j]
        elif method_id == METHOD_JSA:
            props = _mix_draws_flat(rng, n_budget, q_mean, q_log_sigma, t_loc,
                                    t_scale, t_df, alpha)
            u_acc = rng.random(n_budget)
            logw_cur = _log_weight_one(state[0], p_mean, p_chol, p_logdet, q_mean,
                                       q_log_sigma, t_loc, t_scale, t_df, alpha,
                                       work, t_const)
            for n in range(n_budget):
                lw = _log_weight_one(props[n], p_mean, p_chol, p_logdet, q_mean,
                                     q_log_sigma, t_loc, t_scale, t_df, alpha, work, t_const)
                if u_acc[n] < math.exp(min(0.0, lw - logw_cur)):
                    for j in range(d):
                        state[0, j] = props[n, j]
                    logw_cur = lw
                _neg_score_into(state[0], q_mean, q_log_sigma, 1.0 / n_budget,
                                grads[t])
        else:  # PMCSA
            props = _mix_draws_flat(rng, n_budget, q_mean, q_log_sigma, t_loc,
                                    t_scale, t_df, alpha)
            u_acc = rng.random(n_budget)
            for n in range(n_budget):
                lw_prev = _log_weight_one(state[n], p_mean, p_chol, p_logdet,
                                          q_mean, q_log_sigma, t_loc, t_scale,
                                          t_df, alpha, work, t_const)
                lw_prop = _log_weight_one(props[n], p_mean, p_chol, p_logdet,
                                          q_mean, q_log_sigma, t_loc, t_scale,
                                          t_df, alpha, work, t_const)
                if u_acc[n] < math.exp(min(0.0, lw_prop - lw_prev)):
                    for j in range(d):
                        state[n, j] = props[n, j]
                _neg_score_into(state[n], q_mean, q_log_sigma, 1.0 / n_budget,
                                grads[t])

    return grads


@njit(**_JIT)
def _variance_trace(grads):
    n, p = grads.shape
    total = 0.0
    for j in range(p):
        mean = 0.0
        for i in range(n):
            mean += grads[i, j]
        mean /= n
        ss = 0.0
        for i in range(n):
            delta = grads[i, j] - mean
            ss += delta * delta
        total += ss / (n - 1)
    return total


@njit(**_JIT)
def replicated_variance(rng, method_id, n_budget, lambda_trace, n_chains,
                        p_mean, p_chol, p_cov_diag, p_logdet,
                        t_loc, t_scale, t_df, alpha):
    t_const = _t_const(t_df)
    d = p_mean.size
    k_len = lambda_trace.shape[0]
    variances = np.empty(k_len)
    work = np.empty(d)
    grads = np.zeros((n_chains, 2 * d))

    q_mean = lambda_trace[0, :d].copy()
    q_log_sigma = lambda_trace[0, d:].copy()
    if method_id == METHOD_PMCSA:
        states = _mix_draws_block(rng, n_chains, n_budget, q_mean, q_log_sigma,
                                  t_loc, t_scale, t_df, alpha)
    else:
        states3 = _mix_draws_flat(rng, n_chains, q_mean, q_log_sigma, t_loc,
                                  t_scale, t_df, alpha)
        states = states3.reshape((n_chains, 1, d))

    for k in range(k_len):
        for j in range(d):
            q_mean[j] = lambda_trace[k, j]
            q_log_sigma[j] = lambda_trace[k, d + j]
        for c in range(n_chains):
            for j in range(2 * d):
                grads[c, j] = 0.0

        if method_id == METHOD_PMCSA:
            props = _mix_draws_block(rng, n_chains, n_budget, q_mean, q_log_sigma,
                                     t_loc, t_scale, t_df, alpha)
            u_acc = rng.random((n_chains, n_budget))
            for c in range(n_chains):
                for n in range(n_budget):
                    lw_prev = _log_weight_one(states[c, n], p_mean, p_chol, p_logdet,
                                              q_mean, q_log_sigma, t_loc, t_scale,
                                              t_df, alpha, work, t_const)
                    lw_prop = _log_weight_one(props[c, n], p_mean, p_chol, p_logdet,
                                              q_mean, q_log_sigma, t_loc, t_scale,
                                              t_df, alpha, work, t_const)
                    if u_acc[c, n] < math.exp(min(0.0, lw_prop - lw_prev)):
                        for j in range(d):
                            states[c, n, j] = props[c, n, j]
                    _neg_score_into(states[c, n], q_mean, q_log_sigma,
                                    1.0 / n_budget, grads[c])
        elif method_id == METHOD_MSC or method_id == METHOD_MSCRB:
            m = n_budget - 1
            props = _mix_draws_block(rng, n_chains, m, q_mean, q_log_sigma, t_loc,
                                     t_scale, t_df, alpha)
            u_sel = rng.random(n_chains)
            logw = np.empty(m + 1)
            for c in range(n_chains):
                logw[0] = _log_weight_one(states[c, 0], p_mean, p_chol, p_logdet,
                                          q_mean, q_log_sigma, t_loc, t_scale, t_df,
                                          alpha, work, t_const)
                for i in range(m):
                    logw[i + 1] = _log_weight_one(props[c, i], p_mean, p_chol,
                                                  p_logdet, q_mean, q_log_sigma,
                                                  t_loc, t_scale, t_df, alpha, work, t_const)
                mx = logw[0]
                for i in range(1, m + 1):
                    if logw[i] > mx:
                        mx = logw[i]
                wsum = 0.0
                for i in range(m + 1):
                    wsum += math.exp(logw[i] - mx)
                sel = m
                csum = 0.0
                for i in range(m + 1):
                    csum += math.exp(logw[i] - mx) / wsum
                    if u_sel[c] < csum:
                        sel = i
                        break
                if method_id == METHOD_MSC:
                    if sel == 0:
                        _neg_score_into(states[c, 0], q_mean, q_log_sigma, 1.0,
                                        grads[c])
                    else:
                        _neg_score_into(props[c, sel - 1], q_mean, q_log_sigma, 1.0,
                                        grads[c])
                else:
                    _neg_score_into(states[c, 0], q_mean, q_log_sigma,
                                    math.exp(logw[0] - mx) / wsum, grads[c])
                    for i in range(m):
                        _neg_score_into(props[c, i], q_mean, q_log_sigma,
                                        math.exp(logw[i + 1] - mx) / wsum, grads[c])
                if sel != 0:
                    for j in range(d):
                        states[c, 0, j] = props[c, sel - 1, j]
        else:  # JSA
            props = _mix_draws_block(rng, n_chains, n_budget, q_mean, q_log_sigma,
                                     t_loc, t_scale, t_df, alpha)
            u_acc = rng.random((n_chains, n_budget))
            for c in range(n_chains):
                logw_cur = _log_weight_one(states[c, 0], p_mean, p_chol, p_logdet,
                                           q_mean, q_log_sigma, t_loc, t_scale,
                                           t_df, alpha, work, t_const)
                for n in range(n_budget):
                    lw = _log_weight_one(props[c, n], p_mean, p_chol, p_logdet,
                                         q_mean, q_log_sigma, t_loc, t_scale, t_df,
                                         alpha, work, t_const)
                    if u_acc[c, n] < math.exp(min(0.0, lw - logw_cur)):
                        for j in range(d):
                            states[c, 0, j] = props[c, n, j]
                        logw_cur = lw
                    _neg_score_into(states[c, 0], q_mean, q_log_sigma,
                                    1.0 / n_budget, grads[c])

        variances[k] = _variance_trace(grads)

    return variances
