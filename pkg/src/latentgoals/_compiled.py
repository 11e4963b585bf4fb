"""Numba kernels for the hot paths: locally-linear model queries/updates,
the fused online decomposition step, consolidation replay, and the
rotation/scale residual optimizer.

All randomness needed inside kernels (new-prototype weight init) comes from
a counter-based splitmix64 hash, so kernels are bit-deterministic and
checkpoints need no auxiliary RNG state.
"""

import numpy as np
from numba import njit

# Unnormalized kernel weights below this are treated as zero; activation
# maxima are unaffected because the creation threshold (0.37) is far above.
WEIGHT_CUTOFF = 1e-6
_CUT_LOG = 13.815510557964274  # -ln(WEIGHT_CUTOFF)


@njit(cache=True, inline="always")
def _splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = x
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def hash_unit(seed, index):
    """Deterministic pseudo-random float in [0, 1) for (seed, index)."""
    z = _splitmix64(seed ^ (np.uint64(index) * np.uint64(0xD1B54A32D192ED03)))
    return (z >> np.uint64(11)) * 1.1102230246251565e-16


@njit(cache=True)
def _raw_weights(centers, count, radius, z, w):
    """Unnormalized kernel weights into w[:count] (far ones exactly zero).

    Returns (weight sum, max activation, nearest prototype index).
    """
    din = centers.shape[1]
    denom = 2.0 * radius * radius
    cut = denom * _CUT_LOG
    wmax = 0.0
    wsum = 0.0
    best = -1
    d2best = 1e300
    for k in range(count):
        d2 = 0.0
        for i in range(din):
            diff = z[i] - centers[k, i]
            d2 += diff * diff
        if d2 < d2best:
            d2best = d2
            best = k
        if d2 < cut:
            wk = np.exp(-d2 / denom)
            w[k] = wk
            wsum += wk
            if wk > wmax:
                wmax = wk
        else:
            w[k] = 0.0
    return wsum, wmax, best


@njit(cache=True)
def _finalize_weights(w, count, wsum, best, active):
    """Normalize w in place (nearest-prototype fallback when all weights
    vanished) and collect the indices of active prototypes."""
    n_active = 0
    if count == 0:
        return 0
    if wsum <= 0.0:
        for k in range(count):
            w[k] = 0.0
        w[best] = 1.0
        active[0] = best
        return 1
    inv = 1.0 / wsum
    for k in range(count):
        if w[k] != 0.0:
            w[k] *= inv
            active[n_active] = k
            n_active += 1
    return n_active


@njit(cache=True)
def ll_weights(centers, count, radius, z, w):
    """Normalized weights into w[:count]; returns (max unnormalized
    activation, nearest index)."""
    wsum, wmax, best = _raw_weights(centers, count, radius, z, w)
    if count > 0:
        if wsum > 0.0:
            for k in range(count):
                w[k] /= wsum
        else:
            w[best] = 1.0
    return wmax, best


@njit(cache=True)
def _predict_active(centers, a, b, z, w, active, n_active, out):
    dout = a.shape[1]
    din = a.shape[2]
    for o in range(dout):
        out[o] = 0.0
    for j in range(n_active):
        k = active[j]
        wk = w[k]
        for o in range(dout):
            acc = b[k, o]
            for i in range(din):
                acc += a[k, o, i] * (z[i] - centers[k, i])
            out[o] += wk * acc


@njit(cache=True)
def ll_predict_into(centers, a, b, count, radius, z, out, w):
    """Weighted sum of local affine predictions; fills `out` and `w`."""
    dout = a.shape[1]
    for o in range(dout):
        out[o] = 0.0
    wmax, _ = ll_weights(centers, count, radius, z, w)
    din = a.shape[2]
    for k in range(count):
        wk = w[k]
        if wk == 0.0:
            continue
        for o in range(dout):
            acc = b[k, o]
            for i in range(din):
                acc += a[k, o, i] * (z[i] - centers[k, i])
            out[o] += wk * acc
    return wmax


@njit(cache=True)
def ll_create(centers, a, b, count, z, init_scale, init_b, seed):
    """Append a prototype at z; A entries are hash-derived in
    (-init_scale, init_scale), b is copied from init_b."""
    dout = a.shape[1]
    din = a.shape[2]
    for i in range(din):
        centers[count, i] = z[i]
    base = np.uint64(count) * np.uint64(dout * din)
    for o in range(dout):
        for i in range(din):
            u = hash_unit(seed, base + np.uint64(o * din + i))
            a[count, o, i] = (2.0 * u - 1.0) * init_scale
    for o in range(dout):
        b[count, o] = init_b[o]
    return count + 1


@njit(cache=True)
def ll_affine_step(centers, a, b, count, w, z, coef, direction):
    """Add coef * w_k * direction (and the matching A update) to every
    active prototype; `direction` has the model's output dimension."""
    dout = a.shape[1]
    din = a.shape[2]
    for k in range(count):
        wk = w[k]
        if wk == 0.0:
            continue
        cw = coef * wk
        for o in range(dout):
            d = cw * direction[o]
            b[k, o] += d
            for i in range(din):
                a[k, o, i] += d * (z[i] - centers[k, i])


@njit(cache=True, inline="always")
def _affine_step_active(centers, a, b, z, w, active, n_active, coef, direction):
    dout = a.shape[1]
    din = a.shape[2]
    for j in range(n_active):
        k = active[j]
        cw = coef * w[k]
        for o in range(dout):
            d = cw * direction[o]
            b[k, o] += d
            for i in range(din):
                a[k, o, i] += d * (z[i] - centers[k, i])


@njit(cache=True, inline="always")
def _query_grow(centers, a, b, counts, slot, radius, z, w, active,
                init_scale, init_b, seed, threshold, grow):
    """One weight scan covering creation check, normalization and the
    active-index list; returns the number of active prototypes."""
    count = counts[slot]
    wsum, wmax, best = _raw_weights(centers, count, radius, z, w)
    if grow == 1 and (count == 0 or wmax < threshold):
        count = ll_create(centers, a, b, count, z, init_scale, init_b, seed)
        counts[slot] = count
        w[count - 1] = 1.0
        wsum += 1.0
        best = count - 1
    return _finalize_weights(w, count, wsum, best, active)


@njit(cache=True)
def _step_core(ctx, act, reward,
               h_c, h_a, h_b, f_c, f_a, f_b,
               ec_c, ec_a, ec_b, ea_c, ea_a, ea_b,
               counts, radii, seeds, k_arr,
               rate_d, rate_c, decay, init_scales, threshold, grow,
               goal, self_pt, scratch1, w_h, w_f, w_ec, w_ea,
               act_h, act_f, act_ec, act_ea, diag):
    latent = goal.shape[0]
    zero_lat = scratch1[:latent]
    zero_one = scratch1[latent:latent + 1]
    for i in range(latent):
        zero_lat[i] = 0.0
    zero_one[0] = 0.0

    n_h = _query_grow(h_c, h_a, h_b, counts, 0, radii[0], ctx, w_h, act_h,
                      init_scales[0], zero_lat, seeds[0], threshold, grow)
    n_f = _query_grow(f_c, f_a, f_b, counts, 1, radii[1], act, w_f, act_f,
                      init_scales[1], zero_lat, seeds[1], threshold, grow)
    n_ec = _query_grow(ec_c, ec_a, ec_b, counts, 2, radii[2], ctx, w_ec, act_ec,
                       init_scales[2], zero_one, seeds[2], threshold, grow)
    n_ea = _query_grow(ea_c, ea_a, ea_b, counts, 3, radii[3], act, w_ea, act_ea,
                       init_scales[3], zero_one, seeds[3], threshold, grow)

    _predict_active(h_c, h_a, h_b, ctx, w_h, act_h, n_h, goal)
    _predict_active(f_c, f_a, f_b, act, w_f, act_f, n_f, self_pt)
    ec_out = scratch1[latent + 1:latent + 2]
    ea_out = scratch1[latent + 2:latent + 3]
    _predict_active(ec_c, ec_a, ec_b, ctx, w_ec, act_ec, n_ec, ec_out)
    _predict_active(ea_c, ea_a, ea_b, act, w_ea, act_ea, n_ea, ea_out)
    ec = ec_out[0]
    ea = ea_out[0]

    dist2 = 0.0
    for i in range(latent):
        diff = goal[i] - self_pt[i]
        dist2 += diff * diff
    r_hat = -dist2 + ec + ea + k_arr[0]
    err = reward - r_hat

    diag[0] = r_hat
    diag[1] = err
    diag[2] = ec
    diag[3] = ea
    diag[4] = k_arr[0]

    if rate_d != 0.0 or rate_c != 0.0:
        diff_vec = scratch1[latent + 3:2 * latent + 3]
        for i in range(latent):
            diff_vec[i] = goal[i] - self_pt[i]
        coef_map = rate_d * (err + decay * (ea + ec))
        _affine_step_active(f_c, f_a, f_b, act, w_f, act_f, n_f, coef_map, diff_vec)
        _affine_step_active(h_c, h_a, h_b, ctx, w_h, act_h, n_h, -coef_map, diff_vec)
        one = scratch1[2 * latent + 3:2 * latent + 4]
        one[0] = 1.0
        _affine_step_active(ea_c, ea_a, ea_b, act, w_ea, act_ea, n_ea,
                            rate_c * (err - decay * ea), one)
        _affine_step_active(ec_c, ec_a, ec_b, ctx, w_ec, act_ec, n_ec,
                            rate_c * (err - decay * ec), one)
        k_arr[0] += rate_c * err


@njit(cache=True)
def online_step_kernel(ctx, act, reward,
                       h_c, h_a, h_b, f_c, f_a, f_b,
                       ec_c, ec_a, ec_b, ea_c, ea_a, ea_b,
                       counts, radii, seeds, k_arr,
                       rate_d, rate_c, decay, init_scales, threshold, grow,
                       goal, self_pt, scratch1, w_h, w_f, w_ec, w_ea,
                       act_h, act_f, act_ec, act_ea, diag):
    _step_core(ctx, act, reward,
               h_c, h_a, h_b, f_c, f_a, f_b,
               ec_c, ec_a, ec_b, ea_c, ea_a, ea_b,
               counts, radii, seeds, k_arr,
               rate_d, rate_c, decay, init_scales, threshold, grow,
               goal, self_pt, scratch1, w_h, w_f, w_ec, w_ea,
               act_h, act_f, act_ec, act_ea, diag)


@njit(cache=True)
def consolidate_kernel(ctx_buf, act_buf, r_buf, order,
                       h_c, h_a, h_b, f_c, f_a, f_b,
                       ec_c, ec_a, ec_b, ea_c, ea_a, ea_b,
                       counts, radii, seeds, k_arr,
                       rate_d, rate_c, decay, init_scales, threshold,
                       goal, self_pt, scratch1, w_h, w_f, w_ec, w_ea,
                       act_h, act_f, act_ec, act_ea, diag):
    """Replay buffered samples in the given order; returns the number of
    steps applied before any capacity limit was hit (== len(order) normally)."""
    cap = h_c.shape[0]
    for t in range(order.shape[0]):
        if counts[0] >= cap - 1 or counts[1] >= cap - 1 \
                or counts[2] >= cap - 1 or counts[3] >= cap - 1:
            return t
        i = order[t]
        _step_core(ctx_buf[i], act_buf[i], r_buf[i],
                   h_c, h_a, h_b, f_c, f_a, f_b,
                   ec_c, ec_a, ec_b, ea_c, ea_a, ea_b,
                   counts, radii, seeds, k_arr,
                   rate_d, rate_c, decay, init_scales, threshold, 1,
                   goal, self_pt, scratch1, w_h, w_f, w_ec, w_ea,
                   act_h, act_f, act_ec, act_ea, diag)
    return order.shape[0]


@njit(cache=True)
def _vs_cost(kcc, kaa, sigma, v, s, rc, ra):
    """Residual matrices and their summed Frobenius norms for (v, s)."""
    n = sigma.shape[0]
    ec = 0.0
    ea = 0.0
    for i in range(n):
        for j in range(n):
            acc_c = 0.0
            acc_a = 0.0
            for k in range(n):
                acc_c += v[i, k] * v[j, k] / (s[k] * s[k])
                acc_a += v[i, k] * v[j, k] * (s[k] * s[k])
            rc[i, j] = kcc[i, j] + sigma[i] * acc_c * sigma[j]
            ra[i, j] = kaa[i, j] + acc_a
            ec += rc[i, j] * rc[i, j]
            ea += ra[i, j] * ra[i, j]
    return np.sqrt(ec) + np.sqrt(ea)


@njit(cache=True)
def optimize_projection_kernel(kcc, kaa, sigma, base_step, max_iters, tol, s_floor):
    """Backtracked gradient descent on the summed residual norms over an
    orthonormal rotation and positive diagonal scale.

    Returns (rotation, scale, cost history, max orthonormality deviation,
    clamp count).  Accepted steps never increase the cost; the rotation is
    re-orthonormalized (singular values set to 1) after every update and the
    scale is clamped at s_floor.
    """
    n = sigma.shape[0]
    v = np.eye(n)
    s = np.ones(n)
    rc = np.empty((n, n))
    ra = np.empty((n, n))
    history = np.empty(max_iters + 1)
    cost = _vs_cost(kcc, kaa, sigma, v, s, rc, ra)
    history[0] = cost
    iters = 0
    mult = 1.0
    max_ortho = 0.0
    clamp_count = 0
    for it in range(max_iters):
        norm_c = 0.0
        norm_a = 0.0
        for i in range(n):
            for j in range(n):
                norm_c += rc[i, j] * rc[i, j]
                norm_a += ra[i, j] * ra[i, j]
        norm_c = np.sqrt(norm_c)
        norm_a = np.sqrt(norm_a)

        # gradient of |Rc| + |Ra|; at a zero matrix the gradient term is zero
        gv = np.zeros((n, n))
        gs = np.zeros(n)
        for i in range(n):
            for j in range(n):
                gc = rc[i, j] / norm_c if norm_c > 0.0 else 0.0
                ga = ra[i, j] / norm_a if norm_a > 0.0 else 0.0
                for k in range(n):
                    gv[i, k] += 2.0 * sigma[i] * gc * sigma[j] * v[j, k] / (s[k] * s[k])
                    gv[i, k] += 2.0 * ga * v[j, k] * (s[k] * s[k])
        for k in range(n):
            t1 = 0.0
            t2 = 0.0
            for i in range(n):
                for j in range(n):
                    gc = rc[i, j] / norm_c if norm_c > 0.0 else 0.0
                    ga = ra[i, j] / norm_a if norm_a > 0.0 else 0.0
                    t1 += v[i, k] * sigma[i] * gc * sigma[j] * v[j, k]
                    t2 += v[i, k] * ga * v[j, k]
            gs[k] = -2.0 * t1 / (s[k] ** 3) + 2.0 * s[k] * t2

        accepted = False
        new_cost = cost
        while mult >= 1e-12:
            step = base_step * mult
            vc = v - step * gv
            uu, _, vvt = np.linalg.svd(vc)
            v_new = uu @ vvt
            s_new = s - step * gs
            clamped = 0
            for k in range(n):
                if s_new[k] < s_floor:
                    s_new[k] = s_floor
                    clamped += 1
            new_cost = _vs_cost(kcc, kaa, sigma, v_new, s_new, rc, ra)
            if new_cost <= cost + 1e-15:
                v = v_new
                s = s_new
                clamp_count += clamped
                dev = 0.0
                for i in range(n):
                    for j in range(n):
                        acc = 0.0
                        for k in range(n):
                            acc += v[k, i] * v[k, j]
                        if i == j:
                            acc -= 1.0
                        dev += acc * acc
                dev = np.sqrt(dev)
                if dev > max_ortho:
                    max_ortho = dev
                accepted = True
                mult = min(mult * 1.25, 1e4)
                break
            mult *= 0.5
        iters = it + 1
        if not accepted:
            # cannot descend further at the smallest trial step
            _vs_cost(kcc, kaa, sigma, v, s, rc, ra)
            history[iters] = cost
            break
        history[iters] = new_cost
        if abs(cost - new_cost) < tol:
            cost = new_cost
            break
        cost = new_cost
    return v, s, history[:iters + 1], max_ortho, clamp_count
