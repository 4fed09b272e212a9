"""Scalar reference implementations, written straight from the formulas.

Deliberately slow and loop-based; they share no code with the package.
"""
import math

import numpy as np


def keys_cubic(x):
    x = abs(x)
    if x <= 1:
        return 1.5 * x ** 3 - 2.5 * x ** 2 + 1
    if x <= 2:
        return -0.5 * x ** 3 + 2.5 * x ** 2 - 4 * x + 2
    return 0.0


def resize_axis_weights(in_len, out_len, scale, antialias):
    """List of {input_index: weight} per output sample."""
    out = []
    shrink = antialias and scale < 1
    for i in range(out_len):
        center = (i + 0.5) / scale - 0.5
        support = 2.0 / scale if shrink else 2.0
        lo = int(math.floor(center - support)) - 1
        hi = int(math.ceil(center + support)) + 1
        ws = {}
        total = 0.0
        for j in range(lo, hi + 1):
            d = center - j
            w = scale * keys_cubic(scale * d) if shrink else keys_cubic(d)
            if w == 0.0:
                continue
            jj = min(max(j, 0), in_len - 1)
            ws[jj] = ws.get(jj, 0.0) + w
            total += w
        out.append({k: v / total for k, v in ws.items()})
    return out


def resize(img, out_h, out_w, antialias=True, scale=None):
    h, w, c = img.shape
    sy = out_h / h if scale is None else scale
    sx = out_w / w if scale is None else scale
    wy = resize_axis_weights(h, out_h, sy, antialias)
    wx = resize_axis_weights(w, out_w, sx, antialias)
    out = np.zeros((out_h, out_w, c))
    for i in range(out_h):
        for j in range(out_w):
            for ch in range(c):
                acc = 0.0
                for y, a in wy[i].items():
                    for x, b in wx[j].items():
                        acc += a * b * img[y, x, ch]
                out[i, j, ch] = acc
    return np.clip(out, 0, 1)


def round_half_away(x):
    return int(math.floor(x + 0.5))


def downscale(img, taps, s, center=None):
    """Convolve (edge replicate) and sample; output i puts the kernel center at (i+0.5)s-0.5."""
    h, w, c = img.shape
    kh, kw = taps.shape
    taps = taps / taps.sum()
    if center is None:
        center = ((kh - 1) / 2, (kw - 1) / 2)
    oh, ow = round_half_away(h / s), round_half_away(w / s)
    out = np.zeros((oh, ow, c))
    for i in range(oh):
        r0 = math.floor((i + 0.5) * s - 0.5 - center[0] + 0.5)
        for j in range(ow):
            c0 = math.floor((j + 0.5) * s - 0.5 - center[1] + 0.5)
            for ch in range(c):
                acc = 0.0
                for a in range(kh):
                    for b in range(kw):
                        y = min(max(r0 + a, 0), h - 1)
                        x = min(max(c0 + b, 0), w - 1)
                        acc += taps[a, b] * img[y, x, ch]
                out[i, j, ch] = acc
    return out


def luma(img):
    if img.shape[2] == 1:
        return img[:, :, 0].astype(float)
    h, w, _ = img.shape
    y = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            r, g, b = img[i, j]
            y[i, j] = (65.481 * r + 128.553 * g + 24.966 * b + 16) / 255
    return y


def psnr(a, b, shave):
    ya, yb = luma(a), luma(b)
    h, w = ya.shape
    total, n = 0.0, 0
    for i in range(shave, h - shave):
        for j in range(shave, w - shave):
            total += (ya[i, j] - yb[i, j]) ** 2
            n += 1
    mse = total / n
    return math.inf if mse == 0 else 10 * math.log10(1 / mse)


def ssim(a, b, shave):
    ya, yb = luma(a), luma(b)
    h, w = ya.shape
    ya = ya[shave:h - shave, shave:w - shave]
    yb = yb[shave:h - shave, shave:w - shave]
    g = [math.exp(-((k - 5) ** 2) / (2 * 1.5 ** 2)) for k in range(11)]
    norm = sum(g) ** 2
    win = [[g[p] * g[q] / norm for q in range(11)] for p in range(11)]
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for i in range(ya.shape[0] - 10):
        for j in range(ya.shape[1] - 10):
            mx = my = sxx = syy = sxy = 0.0
            for p in range(11):
                for q in range(11):
                    wt = win[p][q]
                    x, y = ya[i + p, j + q], yb[i + p, j + q]
                    mx += wt * x
                    my += wt * y
                    sxx += wt * x * x
                    syy += wt * y * y
                    sxy += wt * x * y
            vx, vy, cxy = sxx - mx * mx, syy - my * my, sxy - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


def l1(pred, target):
    flat_p, flat_t = pred.ravel(), target.ravel()
    total = 0.0
    grad = np.zeros(flat_p.size)
    for i in range(flat_p.size):
        d = flat_p[i] - flat_t[i]
        total += abs(d)
        grad[i] = int(d > 0) - int(d < 0)
    n = flat_p.size
    return total / n, (grad / n).reshape(pred.shape)


def gaussian_density_kernel(l1_, l2_, theta, floor=0.05):
    """Normalized sampled Gaussian, evaluated tap by tap from the 2x2 covariance."""
    l1_, l2_ = max(l1_, floor), max(l2_, floor)
    c, s = math.cos(theta), math.sin(theta)
    # Sigma = U diag(l1, l2) U^T, inverted in closed form
    a = c * c * l1_ + s * s * l2_
    b = c * s * l1_ - c * s * l2_
    d = s * s * l1_ + c * c * l2_
    det = a * d - b * b
    r = math.ceil(3 * math.sqrt(max(l1_, l2_)))
    taps = np.zeros((2 * r + 1, 2 * r + 1))
    for i in range(-r, r + 1):
        for j in range(-r, r + 1):
            q = (d * i * i - 2 * b * i * j + a * j * j) / det
            taps[i + r, j + r] = math.exp(-0.5 * q)
    return taps / taps.sum()


def conv_net(weights, biases, x):
    """Residual net forward with scalar loops: edge padding, ReLU on all but the last layer."""
    act = x.astype(float)
    h, w, _ = x.shape
    for li, (wt, b) in enumerate(zip(weights, biases)):
        cout, cin, k, _ = wt.shape
        p = k // 2
        out = np.zeros((h, w, cout))
        for i in range(h):
            for j in range(w):
                for o in range(cout):
                    acc = b[o]
                    for ci in range(cin):
                        for dy in range(k):
                            for dx in range(k):
                                y = min(max(i + dy - p, 0), h - 1)
                                xx = min(max(j + dx - p, 0), w - 1)
                                acc += wt[o, ci, dy, dx] * act[y, xx, ci]
                    out[i, j, o] = acc
        act = np.maximum(out, 0) if li < len(weights) - 1 else out
    return x + act
