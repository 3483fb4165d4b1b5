"""Independent reference implementations used only by the tests.

Each oracle is written the slow, obvious way and shares no code with the
path it checks.
"""
import math

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - the oracle still works, just slowly
    numba = None


def scalar_softmax(row):
    m = max(row)
    exps = [math.exp(x - m) for x in row]
    s = sum(exps)
    return [e / s for e in exps]


def fd_gradient(f, x, h=1e-5):
    """Central finite differences of scalar f at flat vector x."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_error(a, b, floor=1e-6):
    """Per-coordinate |a - b| / max(|a|, |b|, floor); the floor absorbs FD noise at true zeros."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def brute_force_returns(rewards, dones, bootstrap, gamma):
    """For each (e, t) sum gamma^k r forward until a done or the segment end."""
    n_e, t_max = len(rewards), len(rewards[0])
    out = [[0.0] * t_max for _ in range(n_e)]
    for e in range(n_e):
        for t in range(t_max):
            total, k, terminated = 0.0, 0, False
            for u in range(t, t_max):
                total += gamma ** k * rewards[e][u]
                k += 1
                if dones[e][u]:
                    terminated = True
                    break
            if not terminated:
                total += gamma ** k * bootstrap[e]
            out[e][t] = total
    return out


def _naive_preprocess(f1, f2, out_h, out_w):
    h, w = f1.shape[0], f1.shape[1]
    gray = np.zeros((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            rgb = [0, 0, 0]
            for c in range(3):
                a, b = int(f1[y, x, c]), int(f2[y, x, c])
                rgb[c] = a if a > b else b
            # 0.299 R + 0.587 G + 0.114 B, rounded half-up, kept in integers
            gray[y, x] = (299 * rgb[0] + 587 * rgb[1] + 114 * rgb[2] + 500) // 1000
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    # destination cell (i, j) covers source rows [i*h/out_h, (i+1)*h/out_h); scale by out_h*out_w
    for i in range(out_h):
        for j in range(out_w):
            acc = 0
            for y in range((i * h) // out_h, ((i + 1) * h - 1) // out_h + 1):
                oy = min((i + 1) * h, (y + 1) * out_h) - max(i * h, y * out_h)
                if oy <= 0:
                    continue
                for x in range((j * w) // out_w, ((j + 1) * w - 1) // out_w + 1):
                    ox = min((j + 1) * w, (x + 1) * out_w) - max(j * w, x * out_w)
                    if ox > 0:
                        acc += oy * ox * gray[y, x]
            denom = h * w
            out[i, j] = (2 * acc + denom) // (2 * denom)
    return out


naive_preprocess = numba.njit(cache=True)(_naive_preprocess) if numba else _naive_preprocess


def naive_preprocess_pair(f1, f2):
    return naive_preprocess(f1, f2, 84, 84)[:, :, None]
