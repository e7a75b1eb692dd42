"""Independent reference computations in plain numpy loops."""
import numpy as np


def loop_matmul(a, b):
    n, k = a.shape
    _, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def direct_conv(x, w, b, circular=True):
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    p = k // 2
    out = np.zeros((B, O, H, W))
    for n in range(B):
        for o in range(O):
            for i in range(H):
                for j in range(W):
                    acc = b[o]
                    for c in range(C):
                        for di in range(k):
                            for dj in range(k):
                                r, s = i + di - p, j + dj - p
                                if circular:
                                    acc += x[n, c, r % H, s % W] * w[o, c, di, dj]
                                elif 0 <= r < H and 0 <= s < W:
                                    acc += x[n, c, r, s] * w[o, c, di, dj]
                    out[n, o, i, j] = acc
    return out


def brute_rank(scores, true_id, filtered=()):
    """Rank by sorting: position of the true entity, ties broken by the mean-tie rule."""
    keep = [i for i in range(len(scores)) if i == true_id or i not in set(filtered)]
    ordered = sorted(keep, key=lambda i: -scores[i])
    better = sum(1 for i in ordered if scores[i] > scores[true_id])
    equal = sum(1 for i in ordered if scores[i] == scores[true_id] and i != true_id)
    return 1 + better + -(-equal // 2)
