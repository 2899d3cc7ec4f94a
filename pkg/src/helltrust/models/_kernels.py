"""Single-threaded SGD epoch kernels for the latent-factor family.

Each function runs one full epoch over the shuffled rating entries (the
permutation is generated outside, so all randomness stays with the caller)
and returns the sum of squared prediction errors seen during the epoch,
which the trainers use as a divergence probe.

The trust-model kernel mirrors the implicit-feedback kernel expression by
expression: with an empty edge list and a zero social weight it performs
the same arithmetic, so the two trainers produce identical trajectories.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def epoch_mf(users, items, ratings, order, p, q, bu, bj, mu, lr, reg, use_bias):
    """Plain MF epoch: r_hat = [mu + b_u + b_j] + p_u . q_j, uniform reg."""
    n_factors = p.shape[1]
    sq_sum = 0.0
    for t in range(order.shape[0]):
        idx = order[t]
        u = users[idx]
        j = items[idx]
        dot = 0.0
        for k in range(n_factors):
            dot += p[u, k] * q[j, k]
        pred = dot
        if use_bias:
            pred += mu + bu[u] + bj[j]
        e = pred - ratings[idx]
        sq_sum += e * e
        if use_bias:
            bu[u] -= lr * (e + reg * bu[u])
            bj[j] -= lr * (e + reg * bj[j])
        for k in range(n_factors):
            pk = p[u, k]
            qk = q[j, k]
            p[u, k] -= lr * (e * qk + reg * pk)
            q[j, k] -= lr * (e * pk + reg * qk)
    return sq_sum


@njit(cache=True)
def epoch_implicit(users, items, ratings, order, p, q, y, bu, bj, mu, lr, reg,
                   ui_indptr, ui_items, u_w, i_w):
    """Implicit-feedback epoch: p_u is augmented with |I_u|^-1/2 sum of y_i.

    u_w[u] = |I_u|^-1/2 (0 when empty), i_w[j] = |U_j|^-1/2; both weight the
    regularization pulls so heavily-rated users and items are damped less.
    """
    n_factors = p.shape[1]
    buf_peff = np.empty(n_factors)
    buf_q = np.empty(n_factors)
    sq_sum = 0.0
    for t in range(order.shape[0]):
        idx = order[t]
        u = users[idx]
        j = items[idx]
        uw = u_w[u]
        lo, hi = ui_indptr[u], ui_indptr[u + 1]
        for k in range(n_factors):
            acc = 0.0
            for pos in range(lo, hi):
                acc += y[ui_items[pos], k]
            buf_peff[k] = p[u, k] + uw * acc
        pred = mu + bu[u] + bj[j]
        for k in range(n_factors):
            pred += q[j, k] * buf_peff[k]
        e = pred - ratings[idx]
        sq_sum += e * e
        for k in range(n_factors):
            buf_q[k] = q[j, k]
        bu[u] -= lr * (e + reg * uw * bu[u])
        bj[j] -= lr * (e + reg * i_w[j] * bj[j])
        for k in range(n_factors):
            q[j, k] -= lr * (e * buf_peff[k] + reg * i_w[j] * q[j, k])
            p[u, k] -= lr * (e * buf_q[k] + reg * uw * p[u, k])
        coef = e * uw
        for pos in range(lo, hi):
            i = ui_items[pos]
            iw = i_w[i]
            for k in range(n_factors):
                y[i, k] -= lr * (coef * buf_q[k] + reg * iw * y[i, k])
    return sq_sum


@njit(cache=True)
def epoch_trust(users, items, ratings, order, p, q, y, w, bu, bj, mu, lr, reg,
                reg_social, ui_indptr, ui_items, u_w, i_w,
                t_indptr, t_trustees, t_weights, tu_w, tv_w, seen, epoch_tag):
    """Trust-regularized epoch.

    Adds |T_u|^-1/2 sum of w_v to the augmented user vector, a trust
    reconstruction term (w_v . p_u vs the edge weight), and in/out-degree
    weighted pulls on p and w.  tu_w[u] = |T_u|^-1/2, tv_w[v] = |T_v+|^-1/2
    (0 when the set is empty).  Each truster's out-edges are visited once
    per epoch, at that user's first rating in the shuffled order; trusters
    with no ratings this epoch are swept at the end.
    """
    n_factors = p.shape[1]
    buf_peff = np.empty(n_factors)
    buf_q = np.empty(n_factors)
    buf_w = np.empty(n_factors)
    sq_sum = 0.0
    for t in range(order.shape[0]):
        idx = order[t]
        u = users[idx]
        j = items[idx]
        uw = u_w[u]
        tw = tu_w[u]
        lo, hi = ui_indptr[u], ui_indptr[u + 1]
        tlo, thi = t_indptr[u], t_indptr[u + 1]
        for k in range(n_factors):
            acc = 0.0
            for pos in range(lo, hi):
                acc += y[ui_items[pos], k]
            wacc = 0.0
            for pos in range(tlo, thi):
                wacc += w[t_trustees[pos], k]
            buf_peff[k] = p[u, k] + uw * acc + tw * wacc
        pred = mu + bu[u] + bj[j]
        for k in range(n_factors):
            pred += q[j, k] * buf_peff[k]
        e = pred - ratings[idx]
        sq_sum += e * e
        for k in range(n_factors):
            buf_q[k] = q[j, k]
        bu[u] -= lr * (e + reg * uw * bu[u])
        bj[j] -= lr * (e + reg * i_w[j] * bj[j])
        p_reg = reg * (uw + reg_social * tw)
        for k in range(n_factors):
            q[j, k] -= lr * (e * buf_peff[k] + reg * i_w[j] * q[j, k])
            p[u, k] -= lr * (e * buf_q[k] + p_reg * p[u, k])
        coef = e * uw
        for pos in range(lo, hi):
            i = ui_items[pos]
            iw = i_w[i]
            for k in range(n_factors):
                y[i, k] -= lr * (coef * buf_q[k] + reg * iw * y[i, k])
        if seen[u] != epoch_tag:
            seen[u] = epoch_tag
            _trust_block(p, w, u, tlo, thi, t_trustees, t_weights, tv_w,
                         lr, reg, reg_social, buf_w)
    # Trusters that had no rating this epoch still get their edges visited.
    for u in range(t_indptr.shape[0] - 1):
        if seen[u] != epoch_tag and t_indptr[u] != t_indptr[u + 1]:
            seen[u] = epoch_tag
            _trust_block(p, w, u, t_indptr[u], t_indptr[u + 1], t_trustees,
                         t_weights, tv_w, lr, reg, reg_social, buf_w)
    return sq_sum


@njit(cache=True)
def _trust_block(p, w, u, tlo, thi, t_trustees, t_weights, tv_w, lr, reg,
                 reg_social, buf_w):
    n_factors = p.shape[1]
    for pos in range(tlo, thi):
        v = t_trustees[pos]
        et = -t_weights[pos]
        for k in range(n_factors):
            et += w[v, k] * p[u, k]
        for k in range(n_factors):
            buf_w[k] = w[v, k]
        vw = tv_w[v]
        for k in range(n_factors):
            w[v, k] -= lr * (reg_social * et * p[u, k] + reg * vw * w[v, k])
            p[u, k] -= lr * (reg_social * et * buf_w[k])
