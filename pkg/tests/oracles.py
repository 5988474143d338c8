"""Independent loop-based reference implementations used by the tests.

Everything here is written with plain Python loops and ``math`` so that it
shares no code path with the vectorised package kernels.
"""

import math

import numpy as np


def matmul_loops(a, b):
    m, k = len(a), len(a[0])
    n = len(b[0])
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for l in range(k):
                s += a[i][l] * b[l][j]
            out[i, j] = s
    return out


def softmax_list(xs):
    top = max(xs)
    ex = [math.exp(x - top) for x in xs]
    tot = math.fsum(ex)
    return [e / tot for e in ex]


def global_read_loops(keys, values, query, temperature=1.0):
    """keys T x H x W x Ck, values T x H x W x Cv, query H x W x Ck."""
    mk = [keys[t, y, x] for t in range(keys.shape[0]) for y in range(keys.shape[1]) for x in range(keys.shape[2])]
    mv = [values[t, y, x] for t in range(values.shape[0]) for y in range(values.shape[1]) for x in range(values.shape[2])]
    h, w = query.shape[:2]
    y_out = np.zeros((h, w, values.shape[-1]))
    s_out = np.zeros((len(mk), h * w))
    for qy in range(h):
        for qx in range(w):
            j = qy * w + qx
            q = query[qy, qx]
            logits = [math.fsum(float(a) * float(b) for a, b in zip(k, q)) / temperature for k in mk]
            s = softmax_list(logits)
            for i, si in enumerate(s):
                s_out[i, j] = si
                y_out[qy, qx] += si * mv[i]
    return y_out, s_out


def position_correlation_loops(prev_key, query_key, mask, pos, fn_w, fn_b):
    h, w, ck = prev_key.shape
    n = h * w

    def embed(key, y, x):
        v = [key[y, x, c] + pos[y, x, c] for c in range(ck)]
        return [math.fsum(fn_w[o, c] * v[c] for c in range(ck)) + fn_b[o] for o in range(fn_w.shape[0])]

    pm = [embed(prev_key, i // w, i % w) for i in range(n)]
    pq = [embed(query_key, j // w, j % w) for j in range(n)]
    S = np.zeros((n, n))
    for i in range(n):
        row = softmax_list([math.fsum(a * b for a, b in zip(pm[i], pq[j])) for j in range(n)])
        g = math.exp(mask[i // w, i % w]) / math.e
        for j in range(n):
            S[i, j] = row[j] * g
    return S


def cross_relation_loops(F, V, gf_w, gf_b, gq_w, gq_b, d):
    n, cv = F.shape
    h, w = V.shape[:2]
    q = [V[y, x] for y in range(h) for x in range(w)]
    gq = [gq_w @ v + gq_b for v in q]
    gf = [gf_w @ f + gf_b for f in F]
    F_q = np.zeros((n, cv))
    for i in range(n):
        for j in range(len(q)):
            F_q[i] += math.fsum(F[i, c] * q[j][c] for c in range(cv)) * gq[j]
    v_fq = np.zeros((h * w, cv))
    for j in range(len(q)):
        for i in range(n):
            v_fq[j] += math.fsum(q[j][c] * F[i, c] for c in range(cv)) * gf[i]
    return F_q / d, (v_fq / d).reshape(h, w, cv)
