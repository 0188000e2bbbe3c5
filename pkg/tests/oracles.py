"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (loops, direct index arithmetic) and
shares no code with the library paths it checks.
"""
import numpy as np


def naive_fold(values, period):
    """Brute-force index enumeration: grid[r][c] = values[c * period + r]."""
    n_periods = len(values) // period
    grid = np.empty((period, n_periods))
    for c in range(n_periods):
        for r in range(period):
            grid[r, c] = values[c * period + r]
    return grid


def naive_unfold(grid):
    p, d = grid.shape
    out = np.empty(p * d)
    for c in range(d):
        for r in range(p):
            out[c * p + r] = grid[r, c]
    return out


def two_pass_minmax_scale(grid):
    """Two independent scans: find extrema, then scale."""
    lo = min(min(row) for row in grid.tolist())
    hi = max(max(row) for row in grid.tolist())
    if hi == lo:
        return np.zeros_like(np.asarray(grid))
    return (np.asarray(grid) - lo) / (hi - lo)


def span_1d_brute_force(m, period, phase=0, start_period=0):
    """Positions of a feature recurring at one phase in m consecutive periods."""
    positions = [phase + (start_period + i) * period for i in range(m)]
    return max(positions) - min(positions) + 1


def naive_conv2d(x, w, stride, padding):
    """Direct cross-correlation loops over an NCHW batch."""
    bsz, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    sh, sw = stride
    if padding == "same":
        oh, ow = -(-h // sh), -(-wd // sw)
        th = max((oh - 1) * sh + kh - h, 0)
        tw = max((ow - 1) * sw + kw - wd, 0)
        pt, pl = th // 2, tw // 2
        xp = np.zeros((bsz, cin, h + th, wd + tw), dtype=x.dtype)
        xp[:, :, pt : pt + h, pl : pl + wd] = x
    else:
        oh, ow = (h - kh) // sh + 1, (wd - kw) // sw + 1
        xp = x
    y = np.zeros((bsz, cout, oh, ow), dtype=x.dtype)
    for b in range(bsz):
        for o in range(cout):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[b, :, i * sh : i * sh + kh, j * sw : j * sw + kw]
                    y[b, o, i, j] = np.sum(patch * w[o])
    return y


def tukey_five_numbers(values):
    """Hand Tukey hinges: median-inclusive halves."""
    v = sorted(values)
    n = len(v)

    def med(seq):
        k = len(seq)
        return seq[k // 2] if k % 2 else (seq[k // 2 - 1] + seq[k // 2]) / 2.0

    lower = v[: (n + 1) // 2]
    upper = v[n // 2 :]
    return (v[0], med(lower), med(v), med(upper), v[-1])


def metrics_by_hand(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
