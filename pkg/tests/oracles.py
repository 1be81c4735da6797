"""Loop-based reference implementations used as independent test oracles."""

import math


def mirror(i, n):
    """Whole-sample symmetric index reflection (d c b | a b c d)."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


def correlate2d(a, kernel):
    h, w = len(a), len(a[0])
    kh, kw = len(kernel), len(kernel[0])
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            s = 0.0
            for u in range(kh):
                for v in range(kw):
                    s += kernel[u][v] * a[mirror(i + u - kh // 2, h)][mirror(j + v - kw // 2, w)]
            out[i][j] = s
    return out


def median2d(a, size):
    h, w = len(a), len(a[0])
    r = size // 2
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            vals = sorted(
                a[mirror(i + u, h)][mirror(j + v, w)] for u in range(-r, r + 1) for v in range(-r, r + 1)
            )
            out[i][j] = vals[len(vals) // 2]
    return out


def reduce_level(a):
    """One Gaussian pyramid reduction with the 5-tap binomial kernel, brute force."""
    k = [1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16]
    kernel = [[ku * kv for kv in k] for ku in k]
    blurred = correlate2d(a, kernel)
    return [row[::2] for row in blurred[::2]]


def metrics_brute(pred, gt):
    """Per-pixel spreadsheet-style evaluation of the eight metrics (SSIM excluded)."""
    p = [x for row in pred for x in row]
    g = [x for row in gt for x in row]
    n = len(p)
    abs_rel = sum(abs(gi - pi) / gi for pi, gi in zip(p, g)) / n
    sq_rel = sum((gi - pi) ** 2 / gi for pi, gi in zip(p, g)) / n
    rmse = math.sqrt(sum((gi - pi) ** 2 for pi, gi in zip(p, g)) / n)
    log10 = math.sqrt(sum((math.log10(gi) - math.log10(pi)) ** 2 for pi, gi in zip(p, g)) / n)
    sig = []
    for t in (1.25, 1.25**2, 1.25**3):
        hits = 0
        for pi, gi in zip(p, g):
            if max(pi / gi, gi / pi) < t:
                hits += 1
        sig.append(hits / n)
    return {"abs_rel": abs_rel, "sq_rel": sq_rel, "rmse": rmse, "log_err": log10,
            "sigma1": sig[0], "sigma2": sig[1], "sigma3": sig[2]}


def _reflect_index(i, n):
    # half-sample symmetric extension, repeated for windows wider than the raster
    i = i % (2 * n)
    return i if i < n else 2 * n - 1 - i


def ssim_brute(a, b, radius=5, sigma=1.5, k1=0.01, k2=0.03):
    """Mean local SSIM by explicit window loops after joint min-max scaling."""
    h, w = len(a), len(a[0])
    flat = [x for row in a for x in row] + [x for row in b for x in row]
    lo, hi = min(flat), max(flat)
    span = hi - lo if hi > lo else 1.0
    a = [[(x - lo) / span for x in row] for row in a]
    b = [[(x - lo) / span for x in row] for row in b]
    g = [math.exp(-(t * t) / (2 * sigma * sigma)) for t in range(-radius, radius + 1)]
    s = sum(g)
    g = [x / s for x in g]
    c1, c2 = k1 * k1, k2 * k2
    total = 0.0
    for i in range(h):
        for j in range(w):
            ma = mb = saa = sbb = sab = 0.0
            for di in range(-radius, radius + 1):
                for dj in range(-radius, radius + 1):
                    wt = g[di + radius] * g[dj + radius]
                    ii, jj = _reflect_index(i + di, h), _reflect_index(j + dj, w)
                    x, y = a[ii][jj], b[ii][jj]
                    ma += wt * x
                    mb += wt * y
                    saa += wt * x * x
                    sbb += wt * y * y
                    sab += wt * x * y
            va, vb, cov = saa - ma * ma, sbb - mb * mb, sab - ma * mb
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    return total / (h * w)
