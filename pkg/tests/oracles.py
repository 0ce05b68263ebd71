"""Slow, independent reference implementations used as test oracles."""

import itertools

import numpy as np


def jacobi_svd(a, tol=1e-15, max_sweeps=100):
    """Singular values by one-sided (Hestenes) Jacobi rotations, descending."""
    a = np.array(a, dtype=np.float64)
    if a.shape[1] > a.shape[0]:
        a = a.T
    n = a.shape[1]
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = a[:, i] @ a[:, i]
                beta = a[:, j] @ a[:, j]
                gamma = a[:, i] @ a[:, j]
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0:
                    continue
                off = max(off, abs(gamma) / np.sqrt(alpha * beta))
                zeta = (beta - alpha) / (2 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1 + zeta * zeta)) if zeta else 1.0
                c = 1 / np.sqrt(1 + t * t)
                s = c * t
                ai, aj = a[:, i].copy(), a[:, j].copy()
                a[:, i] = c * ai - s * aj
                a[:, j] = s * ai + c * aj
        if off <= tol:
            break
    return np.sort(np.linalg.norm(a, axis=0))[::-1]


def naive_matricize(t, k):
    """Mode-k unfolding by explicit index enumeration (1-based k)."""
    shape = t.shape
    rest = [j for j in range(t.ndim) if j != k - 1]
    cols = int(np.prod([shape[j] for j in rest]))
    out = np.zeros((shape[k - 1], cols))
    for idx in itertools.product(*[range(p) for p in shape]):
        col = 0
        for j in rest:
            col = col * shape[j] + idx[j]
        out[idx[k - 1], col] = t[idx]
    return out


def naive_conv2d(x, w, bias=None, stride=1, pad=0):
    """Direct loop evaluation of a zero-padded 2D convolution on ``(h, w, s)``."""
    h, wd, s = x.shape
    d, _, _, t = w.shape
    oh = (h + 2 * pad - d) // stride + 1
    ow = (wd + 2 * pad - d) // stride + 1
    out = np.zeros((oh, ow, t))
    for r in range(oh):
        for c in range(ow):
            acc = np.zeros(t)
            for i in range(d):
                for j in range(d):
                    hi, wj = r * stride + i - pad, c * stride + j - pad
                    if 0 <= hi < h and 0 <= wj < wd:
                        acc += x[hi, wj] @ w[i, j]
            out[r, c] = acc
    if bias is not None:
        out += bias
    return out


def naive_reconstruct(core, u3, u4):
    d = core.shape[0]
    out = np.zeros((d, d, u3.shape[0], u4.shape[0]))
    for i in range(d):
        for j in range(d):
            for a in range(u3.shape[0]):
                for b in range(u4.shape[0]):
                    out[i, j, a, b] = sum(core[i, j, p, q] * u3[a, p] * u4[b, q]
                                          for p in range(u3.shape[1]) for q in range(u4.shape[1]))
    return out


def als_partial_tucker(w, r3, r4, iters=5000, restarts=0, seed=0):
    """Converged residual of alternating least squares for the partial Tucker model.

    Each half-step solves for one loading matrix through an eigendecomposition
    of the corresponding Gram matrix, with the other held fixed. The first
    run starts from the leading Gram eigenvectors of the raw unfoldings (the
    same starting point as truncated-SVD initialisation, reached by a
    different route); ``restarts`` extra runs start from random orthonormal
    matrices. Returns the residual of the first run and the best over all runs.
    """
    rng = np.random.default_rng(seed)
    d, _, s, t = w.shape

    def top_eig(m, r):
        _, vecs = np.linalg.eigh(m @ m.T)
        return vecs[:, ::-1][:, :r]

    starts = [top_eig(np.moveaxis(w, 3, 0).reshape(t, -1), r4)]
    starts += [np.linalg.qr(rng.normal(size=(t, r4)))[0] for _ in range(restarts)]
    results = []
    for v in starts:
        prev = np.inf
        for _ in range(iters):
            z = np.einsum("ijab,bq->ijaq", w, v)
            u = top_eig(np.moveaxis(z, 2, 0).reshape(s, -1), r3)
            z = np.einsum("ijab,ap->ijpb", w, u)
            v = top_eig(np.moveaxis(z, 3, 0).reshape(t, -1), r4)
            core = np.einsum("ijab,ap,bq->ijpq", w, u, v)
            res = np.sqrt(max(np.sum(w * w) - np.sum(core * core), 0.0))
            if abs(prev - res) <= 1e-15 * max(res, 1e-300):
                break
            prev = res
        results.append(res)
    return results[0], min(results)


def naive_unet(params, x):
    """Straight-line forward pass of the encoder-decoder on one ``(h, w, c)`` image.

    Pooling, upsampling and convolution are written out with loops rather
    than reusing the library kernels.
    """
    st = params.structure

    def conv(layer, a):
        s = layer.spec
        z = naive_conv2d(a, layer.kernel, layer.bias, s.stride, s.pad)
        return np.maximum(z, 0) if s.activation == "relu" else z

    def pool(a):
        h, w, c = a.shape
        out = np.empty((h // 2, w // 2, c))
        for r in range(h // 2):
            for q in range(w // 2):
                out[r, q] = a[2 * r:2 * r + 2, 2 * q:2 * q + 2].reshape(4, c).max(axis=0)
        return out

    def up(a):
        h, w, c = a.shape
        out = np.empty((2 * h, 2 * w, c))
        for r in range(2 * h):
            for q in range(2 * w):
                out[r, q] = a[r // 2, q // 2]
        return out

    by_name = {l.name: l for l in params.layers}
    enc = []
    a = x
    for lvl in range(st.levels):
        if lvl:
            a = pool(a)
        a = conv(by_name[f"enc{lvl}"], a)
        enc.append(a)
    for lvl in reversed(range(st.levels - 1)):
        a = conv(by_name[f"dec{lvl}"], np.concatenate([up(a), enc[lvl]], axis=2))
    return conv(by_name["out"], a)
