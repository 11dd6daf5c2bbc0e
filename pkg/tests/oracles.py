"""Slow, obviously-correct reference computations used as test oracles.

Nothing here imports the package's implementation of the thing it checks.
"""

import math
import random


def bilinear_oracle(src, tw, th):
    """Per-pixel half-pixel-centre bilinear resize written as plain loops.

    ``src`` is a nested list / array indexable as ``src[y][x][c]``.
    """
    H, W, C = len(src), len(src[0]), len(src[0][0])
    if (tw, th) == (W, H):
        return [[[float(src[y][x][c]) for c in range(C)] for x in range(W)] for y in range(H)]
    out = []
    for i in range(th):
        fy = min(max((i + 0.5) * (H / th) - 0.5, 0.0), H - 1)
        y0 = int(math.floor(fy))
        y1 = min(y0 + 1, H - 1)
        wy = fy - y0
        row = []
        for j in range(tw):
            fx = min(max((j + 0.5) * (W / tw) - 0.5, 0.0), W - 1)
            x0 = int(math.floor(fx))
            x1 = min(x0 + 1, W - 1)
            wx = fx - x0
            px = []
            for c in range(C):
                a, b = float(src[y0][x0][c]), float(src[y0][x1][c])
                top = a + (b - a) * wx
                a, b = float(src[y1][x0][c]), float(src[y1][x1][c])
                bot = a + (b - a) * wx
                v = top + (bot - top) * wy
                px.append(min(max(v, 0.0), 1.0))
            row.append(px)
        out.append(row)
    return out


def clipped_box(W, H, lam, cx, cy):
    """Centre-uniform box of area ratio 1 - lam, clipped; returns (x1, y1, x2, y2)."""
    cut = math.sqrt(1.0 - lam)
    w0 = int(math.floor(W * cut + 0.5))
    h0 = int(math.floor(H * cut + 0.5))
    x1 = cx - w0 // 2
    y1 = cy - h0 // 2
    x2, y2 = x1 + w0, y1 + h0
    return max(x1, 0), max(y1, 0), min(x2, W), min(y2, H)


def monte_carlo_areas(W, H, alpha, n, seed):
    """Pre- and post-clip area fractions from the standard library RNG."""
    r = random.Random(seed)
    pre, post = [], []
    for _ in range(n):
        lam = r.betavariate(alpha, alpha)
        cx, cy = r.randrange(W), r.randrange(H)
        x1, y1, x2, y2 = clipped_box(W, H, lam, cx, cy)
        pre.append(1.0 - lam)
        post.append(max(x2 - x1, 0) * max(y2 - y1, 0) / (W * H))
    return pre, post


def central_difference(f, arrays, step=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. each numpy array in ``arrays`` (mutated in place)."""
    grads = {}
    for name, arr in arrays.items():
        g = arr.copy()
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = f()
            flat[i] = old - step
            down = f()
            flat[i] = old
            gflat[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def perceptron_separates(X, y, max_epochs=1000):
    """Classic perceptron on labels in {0, 1}; True if it reaches zero training errors."""
    d = len(X[0])
    w = [0.0] * (d + 1)
    for _ in range(max_epochs):
        mistakes = 0
        for xi, yi in zip(X, y):
            s = w[d] + sum(a * b for a, b in zip(w, xi))
            target = 1 if yi == 1 else -1
            if target * s <= 0:
                mistakes += 1
                for k in range(d):
                    w[k] += target * xi[k]
                w[d] += target
        if mistakes == 0:
            return True
    return False


def ks_uniform(values):
    """Kolmogorov-Smirnov distance of a sample from Uniform(0, 1)."""
    xs = sorted(values)
    n = len(xs)
    d = 0.0
    for i, x in enumerate(xs):
        d = max(d, (i + 1) / n - x, x - i / n)
    return d


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest ``|a - n| / max(|a| + |n|, floor)`` across all named arrays."""
    worst = 0.0
    for name, a in analytic.items():
        for x, y in zip(a.reshape(-1), numeric[name].reshape(-1)):
            worst = max(worst, abs(x - y) / max(abs(x) + abs(y), floor))
    return worst
