"""Hot numeric kernels, each with a numba loop version and a numpy version.

The public entry points at the bottom dispatch on :func:`_accel.use_numba`.
Both versions of a kernel accumulate in the same order wherever a test relies
on exact agreement (the distance kernels), so switching backends does not
change neighbour decisions.
"""
import numpy as np

from ._accel import njit, use_numba

# ----------------------------------------------------------------------------
# pairwise distances
# ----------------------------------------------------------------------------


@njit
def _sq_dists_nb(a, b):
    n, d = a.shape
    m = b.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                acc += diff * diff
            out[i, j] = acc
    return out


def _sq_dists_np(a, b):
    out = np.zeros((a.shape[0], b.shape[0]))
    # sequential over features so rounding matches the loop kernel exactly
    for k in range(a.shape[1]):
        diff = a[:, k, None] - b[None, :, k]
        out += diff * diff
    return out


@njit
def _cosine_dists_nb(a, b):
    n, d = a.shape
    m = b.shape[0]
    na = np.empty(n)
    nb = np.empty(m)
    for i in range(n):
        acc = 0.0
        for k in range(d):
            acc += a[i, k] * a[i, k]
        na[i] = np.sqrt(acc)
    for j in range(m):
        acc = 0.0
        for k in range(d):
            acc += b[j, k] * b[j, k]
        nb[j] = np.sqrt(acc)
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                acc += a[i, k] * b[j, k]
            v = 1.0 - acc / (na[i] * nb[j])
            out[i, j] = min(max(v, 0.0), 2.0)
    return out


def _cosine_dists_np(a, b):
    na = np.zeros(a.shape[0])
    nb = np.zeros(b.shape[0])
    dot = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        na += a[:, k] * a[:, k]
        nb += b[:, k] * b[:, k]
        dot += a[:, k, None] * b[None, :, k]
    out = 1.0 - dot / (np.sqrt(na)[:, None] * np.sqrt(nb)[None, :])
    return np.clip(out, 0.0, 2.0)


# ----------------------------------------------------------------------------
# cyclic Jacobi eigensolver
# ----------------------------------------------------------------------------


@njit
def _jacobi_nb(a, max_sweeps, tol):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = np.sqrt(scale)
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * a[i, j] * a[i, j]
        if np.sqrt(off) <= tol * scale:
            return np.diag(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) > 1e150 * abs(apq):
                    # theta^2 would overflow; t -> 1 / (2 theta)
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return np.diag(a).copy(), v, -1


def _jacobi_np(a, max_sweeps, tol):
    n = a.shape[0]
    a = np.array(a, dtype=np.float64, copy=True)
    v = np.eye(n)
    scale = np.sqrt(np.sum(a * a))
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps + 1):
        if np.sqrt(2.0 * np.sum(a[iu] ** 2)) <= tol * scale:
            return np.diag(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) > 1e150 * abs(apq):
                    # theta^2 would overflow; t -> 1 / (2 theta)
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, -1


# ----------------------------------------------------------------------------
# t-SNE: perplexity calibration and KL gradient
# ----------------------------------------------------------------------------


@njit
def _perplexity_nb(d2, target_entropy, tol, max_iter):
    n = d2.shape[0]
    p = np.zeros((n, n))
    entropies = np.empty(n)
    for i in range(n):
        dmin = np.inf
        for j in range(n):
            if j != i and d2[i, j] < dmin:
                dmin = d2[i, j]
        beta = 1.0
        lo = 0.0
        hi = np.inf
        h = 0.0
        for _ in range(max_iter):
            total = 0.0
            weighted = 0.0
            for j in range(n):
                if j == i:
                    p[i, j] = 0.0
                    continue
                e = np.exp(-(d2[i, j] - dmin) * beta)
                p[i, j] = e
                total += e
                weighted += (d2[i, j] - dmin) * e
            h = np.log(total) + beta * weighted / total
            diff = h - target_entropy
            if abs(diff) < tol:
                break
            if diff > 0.0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        total = 0.0
        for j in range(n):
            total += p[i, j]
        for j in range(n):
            p[i, j] /= total
        entropies[i] = h
    return p, entropies


def _perplexity_np(d2, target_entropy, tol, max_iter):
    n = d2.shape[0]
    off = ~np.eye(n, dtype=bool)
    masked = np.where(off, d2, np.inf)
    shifted = d2 - masked.min(axis=1, keepdims=True)
    shifted = np.where(off, shifted, 0.0)
    beta = np.ones(n)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    h = np.zeros(n)
    p = np.zeros((n, n))
    for _ in range(max_iter):
        e = np.where(off, np.exp(-shifted * beta[:, None]), 0.0)
        total = e.sum(axis=1)
        h_new = np.log(total) + beta * (shifted * e).sum(axis=1) / total
        p[active] = e[active]
        h[active] = h_new[active]
        diff = h_new - target_entropy
        active &= np.abs(diff) >= tol
        if not active.any():
            break
        up = active & (diff > 0.0)
        down = active & (diff <= 0.0)
        lo[up] = beta[up]
        beta[up] = np.where(np.isinf(hi[up]), beta[up] * 2.0, 0.5 * (beta[up] + hi[up]))
        hi[down] = beta[down]
        beta[down] = 0.5 * (beta[down] + lo[down])
    p /= p.sum(axis=1, keepdims=True)
    return p, h


@njit
def _tsne_grad_nb(y, p, exaggeration):
    n, dims = y.shape
    num = np.empty((n, n))
    zsum = 0.0
    for i in range(n):
        num[i, i] = 0.0
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(dims):
                diff = y[i, k] - y[j, k]
                acc += diff * diff
            w = 1.0 / (1.0 + acc)
            num[i, j] = w
            num[j, i] = w
            zsum += 2.0 * w
    grad = np.zeros((n, dims))
    kl = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            q = num[i, j] / zsum
            pij = p[i, j]
            coef = 4.0 * (exaggeration * pij - q) * num[i, j]
            for k in range(dims):
                grad[i, k] += coef * (y[i, k] - y[j, k])
            if pij > 0.0:
                kl += pij * np.log(pij / max(q, 1e-300))
    return grad, kl


def _tsne_grad_np(y, p, exaggeration):
    diff = y[:, None, :] - y[None, :, :]
    num = 1.0 / (1.0 + np.sum(diff * diff, axis=2))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    coef = 4.0 * (exaggeration * p - q) * num
    grad = np.einsum("ij,ijk->ik", coef, diff)
    mask = p > 0.0
    kl = float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-300))))
    return grad, kl


# ----------------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------------


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def sq_dists(a, b):
    a, b = _f64(a), _f64(b)
    return _sq_dists_nb(a, b) if use_numba() else _sq_dists_np(a, b)


def cosine_dists(a, b):
    a, b = _f64(a), _f64(b)
    return _cosine_dists_nb(a, b) if use_numba() else _cosine_dists_np(a, b)


def jacobi(a, max_sweeps, tol):
    a = _f64(a)
    if use_numba():
        return _jacobi_nb(a, int(max_sweeps), float(tol))
    return _jacobi_np(a, int(max_sweeps), float(tol))


def perplexity_rows(d2, target_entropy, tol=1e-5, max_iter=200):
    d2 = _f64(d2)
    fn = _perplexity_nb if use_numba() else _perplexity_np
    return fn(d2, float(target_entropy), float(tol), int(max_iter))


def tsne_grad(y, p, exaggeration=1.0):
    y, p = _f64(y), _f64(p)
    fn = _tsne_grad_nb if use_numba() else _tsne_grad_np
    grad, kl = fn(y, p, float(exaggeration))
    return grad, float(kl)
