"""Small dual-encoder / single-decoder disparity network in plain numpy.

Two encoders with separate weights read the left and right monocular clues.
At every scale their feature maps are multiplied elementwise; the products
are the only route from either encoder to the output.  The decoder starts
from the coarsest product and, at each upsampling stage, adds the product of
the matching scale.  Because the encoders only meet through a product, the
gradient reaching one encoder is scaled by the other encoder's features, so
the two weight sets are updated in a coupled way.

Layout for ``widths = (c0, c1, ..., c_{S-1})`` and input ``H x W``::

    encoder scale s:  conv3x3 -> relu -> conv3x3 -> relu (+ skip from first relu) -> avgpool2
                      feature s lives at H / 2**(s+1)
    fused s        =  left_feature_s * right_feature_s
    decoder stage t:  bilinear x2 -> conv1x1 (halve channels) [+ fused s] -> conv3x3 -> relu
    head           :  conv1x1 -> softplus

Tensors are ``(N, C, H, W)`` float64 arrays.  Gradients are computed by an
explicit reverse pass; :func:`numerical_gradient` provides the independent
finite-difference check.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DispFuseError, InvalidInputError, InvalidParameterError

DEFAULT_WIDTHS = (8, 16, 32)
MAGIC = b"DUONET01"
BIAS_INIT = 0.01


class TrainingDivergedError(DispFuseError, FloatingPointError):
    """The training loss became non-finite."""


# ----------------------------------------------------------------- primitives


def _same_extent(a, b, what):
    # a leading batch axis of size 1 may broadcast; all other axes must agree
    sa, sb = np.shape(a), np.shape(b)
    ok = sa == sb
    if not ok and len(sa) == len(sb) == 4 and sa[1:] == sb[1:]:
        ok = 1 in (sa[0], sb[0])
    if not ok:
        raise InvalidInputError(f"{what} extents differ: {sa} vs {sb}")


def fuse_features(f_left: np.ndarray, f_right: np.ndarray) -> np.ndarray:
    """Elementwise product of the two encoders' feature maps."""
    _same_extent(f_left, f_right, "feature")
    return np.multiply(f_left, f_right)


def inject(stream: np.ndarray, fused: np.ndarray) -> np.ndarray:
    """Add a fused feature map into the decoder stream."""
    _same_extent(stream, fused, "decoder stream / fused map")
    return np.add(stream, fused)


def _bilinear_matrix(n: int) -> np.ndarray:
    """``(2n, n)`` operator for 1-D linear x2 upsampling, half-pixel centres, edge clamped."""
    m = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = max((o + 0.5) / 2.0 - 0.5, 0.0)
        i0 = int(math.floor(src))
        frac = src - i0
        i1 = min(i0 + 1, n - 1)
        m[o, i0] += 1.0 - frac
        m[o, i1] += frac
    return m


_UP_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _up2d(h: int, w: int) -> np.ndarray:
    """``(4hw, hw)`` operator acting on row-major flattened ``h x w`` planes."""
    if (h, w) not in _UP_CACHE:
        _UP_CACHE[(h, w)] = np.kron(_bilinear_matrix(h), _bilinear_matrix(w))
    return _UP_CACHE[(h, w)]


def upsample_bilinear(t: np.ndarray) -> np.ndarray:
    """Double the two trailing (spatial) axes with bilinear interpolation (align_corners=False)."""
    t = np.asarray(t, dtype=np.float64)
    *lead, h, w = t.shape
    out = t.reshape(-1, h * w) @ _up2d(h, w).T
    return out.reshape(*lead, 2 * h, 2 * w)


def _upsample_backward(g: np.ndarray) -> np.ndarray:
    *lead, h2, w2 = g.shape
    h, w = h2 // 2, w2 // 2
    out = g.reshape(-1, h2 * w2) @ _up2d(h, w)
    return out.reshape(*lead, h, w)


def _im2col(x, k):
    n, c, h, wd = x.shape
    p = k // 2
    if not p:
        return x.transpose(0, 2, 3, 1).reshape(n * h * wd, c)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))  # n c h w k k
    return cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * k * k)


class _SlotPerturbation:
    """One conv layer whose weight or bias differs from the base by one element per batch slot.

    Slot ``s`` adds ``steps[s]`` to flat element ``index[s]`` of the weight
    (or of the bias when ``bias`` is true).  Since convolution is linear in
    its parameters, each slot's output is the base output plus that element's
    contribution, which avoids a full convolution per slot.
    """

    def __init__(self, w, b, bias: bool, index, steps):
        self.w, self.b, self.bias = w, b, bias
        self.index = np.asarray(index)
        self.steps = np.asarray(steps, dtype=np.float64)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != 1:
            raise InvalidInputError("per-slot perturbations need a single input image")
        base, _ = _conv_forward(x, self.w, self.b, keep=False)
        n_slots = self.index.size
        out = np.repeat(base, n_slots, axis=0)
        slots = np.arange(n_slots)
        if self.bias:
            out[slots, self.index] += self.steps[:, None, None]
            return out
        o, c, k, _ = self.w.shape
        oi, ci, ii, ji = np.unravel_index(self.index, (o, c, k, k))
        h, wd = x.shape[2:]
        p = k // 2
        xp = np.pad(x[0], ((0, 0), (p, p), (p, p))) if p else x[0]
        planes = sliding_window_view(xp, (h, wd), axis=(1, 2))  # c k k h w
        out[slots, oi] += self.steps[:, None, None] * planes[ci, ii, ji]
        return out


def _conv_forward(x, w, b, keep: bool = True):
    """'Same' zero-padded stride-1 convolution (cross-correlation) with odd square kernels.

    Returns ``(out, cols)``; ``cols`` is the im2col matrix the reverse pass
    needs, or None when ``keep`` is false, which takes a cheaper path.
    ``w`` may also be a :class:`_SlotPerturbation` (finite-difference oracle).
    """
    if isinstance(w, _SlotPerturbation):
        return w.apply(x), None
    n, c, h, wd = x.shape
    k = w.shape[-1]
    if not keep:
        p = k // 2
        if p:
            xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
            taps = sliding_window_view(xp, (h, wd), axis=(2, 3))  # n c k k h w
            x = taps.reshape(n, c * k * k, h * wd)
        else:
            x = x.reshape(n, c, h * wd)
        out = np.matmul(w.reshape(w.shape[0], -1), x) + b[:, None]
        return out.reshape(n, -1, h, wd), None
    cols = _im2col(x, k)
    o = w.shape[0]
    out = cols @ w.reshape(o, -1).T + b
    return out.reshape(n, h, wd, o).transpose(0, 3, 1, 2), cols


def _conv_backward(g, cols, x_shape, w):
    n, c, h, wd = x_shape
    o, _, k, _ = w.shape
    p = k // 2
    g2 = g.transpose(0, 2, 3, 1).reshape(n * h * wd, o)
    dw = (g2.T @ cols).reshape(w.shape)
    db = g2.sum(axis=0)
    dcols = g2 @ w.reshape(o, -1)
    if not p:
        return dcols.reshape(n, h, wd, c).transpose(0, 3, 1, 2), dw, db
    dcols = dcols.reshape(n, h, wd, c, k, k)
    dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h, j : j + wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, p : p + h, p : p + wd], dw, db


def _avgpool2(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def _avgpool2_backward(g):
    return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25


def softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


# ----------------------------------------------------------------- network


@dataclass
class DualNet:
    """Parameters of the dual-encoder network, keyed by name.

    ``left.*`` and ``right.*`` hold the two encoders (same shapes, separate
    arrays); ``dec*`` and ``head.*`` the shared decoder.
    """

    params: dict
    widths: tuple = DEFAULT_WIDTHS
    seed: int | None = None

    @property
    def scales(self) -> int:
        return len(self.widths)

    @classmethod
    def init(cls, seed: int = 0, widths=DEFAULT_WIDTHS, in_channels: int = 1,
             zero_head: bool = True) -> "DualNet":
        """He-normal conv weights and small positive biases; the two encoders draw independent values.

        Nonzero biases keep ReLU inputs off exactly 0 where a window sees only zeros.
        With ``zero_head`` the output layer weights start at 0, so every seed
        starts from the constant prediction ``softplus(0.01)`` instead of a
        random logit scale that can leave softplus saturated from step one.
        """
        widths = tuple(int(w) for w in widths)
        if not widths or any(w < 2 or w % 2 for w in widths):
            raise InvalidParameterError(f"widths must be even and >= 2, got {widths}")
        for a, b in zip(widths, widths[1:]):
            if b != 2 * a:
                raise InvalidParameterError(f"each width must double the previous one, got {widths}")
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(widths, in_channels):
            if name.endswith(".w"):
                fan_in = shape[1] * shape[2] * shape[3]
                params[name] = rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)
            else:
                params[name] = np.full(shape, BIAS_INIT)
        if zero_head:
            params["head.w"][...] = 0.0
        return cls(params, widths, seed)

    def copy(self) -> "DualNet":
        return DualNet({k: v.copy() for k, v in self.params.items()}, self.widths, self.seed)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


def param_shapes(widths, in_channels: int = 1) -> list[tuple[str, tuple]]:
    shapes = []
    for side in ("left", "right"):
        c_in = in_channels
        for s, c in enumerate(widths):
            shapes += [
                (f"{side}.enc{s}.conv1.w", (c, c_in, 3, 3)),
                (f"{side}.enc{s}.conv1.b", (c,)),
                (f"{side}.enc{s}.conv2.w", (c, c, 3, 3)),
                (f"{side}.enc{s}.conv2.b", (c,)),
            ]
            c_in = c
    c = widths[-1]
    for t in range(len(widths)):
        shapes += [
            (f"dec{t}.reduce.w", (c // 2, c, 1, 1)),
            (f"dec{t}.reduce.b", (c // 2,)),
            (f"dec{t}.conv.w", (c // 2, c // 2, 3, 3)),
            (f"dec{t}.conv.b", (c // 2,)),
        ]
        c //= 2
    shapes += [("head.w", (1, c, 1, 1)), ("head.b", (1,))]
    return shapes


def as_batch(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 2:
        a = a[None, None]
    elif a.ndim == 3:
        a = a[:, None]
    if a.ndim != 4:
        raise InvalidInputError(f"expected (H,W), (N,H,W) or (N,C,H,W), got shape {np.shape(x)}")
    return a


def _encode(net: DualNet, side: str, x: np.ndarray, p: dict, keep: bool = True):
    feats, caches = [], []
    for s in range(net.scales):
        pre = f"{side}.enc{s}"
        a1, cols1 = _conv_forward(x, p[f"{pre}.conv1.w"], p[f"{pre}.conv1.b"], keep)
        h1 = np.maximum(a1, 0.0)
        a2, cols2 = _conv_forward(h1, p[f"{pre}.conv2.w"], p[f"{pre}.conv2.b"], keep)
        h2 = np.maximum(a2, 0.0) + h1
        f = _avgpool2(h2)
        caches.append((x.shape, cols1, a1, h1.shape, cols2, a2))
        feats.append(f)
        x = f
    return feats, caches


def _encode_backward(net: DualNet, side: str, dfeats, caches, grads):
    p = net.params
    carry = None
    for s in reversed(range(net.scales)):
        pre = f"{side}.enc{s}"
        x_shape, cols1, a1, h1_shape, cols2, a2 = caches[s]
        df = dfeats[s] if carry is None else dfeats[s] + carry
        dh2 = _avgpool2_backward(df)
        da2 = dh2 * (a2 > 0)
        dh1, grads[f"{pre}.conv2.w"], grads[f"{pre}.conv2.b"] = _conv_backward(
            da2, cols2, h1_shape, p[f"{pre}.conv2.w"]
        )
        dh1 = dh1 + dh2
        da1 = dh1 * (a1 > 0)
        carry, grads[f"{pre}.conv1.w"], grads[f"{pre}.conv1.b"] = _conv_backward(
            da1, cols1, x_shape, p[f"{pre}.conv1.w"]
        )


@dataclass
class ForwardTrace:
    """Everything the reverse pass needs; also exposes intermediate maps for inspection."""

    output: np.ndarray
    left_features: list
    right_features: list
    fused: list
    logits: np.ndarray = None
    caches: dict = field(default_factory=dict, repr=False)


def _check_extent(net: DualNet, left: np.ndarray, right: np.ndarray):
    if left.shape != right.shape:
        raise InvalidInputError(f"clue extents differ: {left.shape} vs {right.shape}")
    step = 2**net.scales
    h, w = left.shape[2:]
    if h % step or w % step or h == 0 or w == 0:
        raise InvalidInputError(f"clue extent {h}x{w} is not divisible by 2**{net.scales} = {step}")


def forward_trace(net: DualNet, left_clue, right_clue, params: dict | None = None,
                  keep: bool = True) -> ForwardTrace:
    """Forward pass keeping the intermediates.

    ``params`` overrides ``net.params``; the finite-difference oracle passes
    a per-slot perturbed layer through it.  With ``keep=False``
    the im2col buffers are not stored and the trace cannot be fed to
    :func:`backward_from_output`.
    """
    left = as_batch(left_clue)
    right = as_batch(right_clue)
    _check_extent(net, left, right)
    p = net.params if params is None else params
    fl, cl = _encode(net, "left", left, p, keep)
    fr, cr = _encode(net, "right", right, p, keep)
    fused = [fuse_features(a, b) for a, b in zip(fl, fr)]

    d = fused[-1]
    dec = []
    for t in range(net.scales):
        u = upsample_bilinear(d)
        r, cols_r = _conv_forward(u, p[f"dec{t}.reduce.w"], p[f"dec{t}.reduce.b"], keep)
        s = net.scales - 2 - t
        if s >= 0:
            r = inject(r, fused[s])
        a, cols_c = _conv_forward(r, p[f"dec{t}.conv.w"], p[f"dec{t}.conv.b"], keep)
        dec.append((u.shape, cols_r, r.shape, cols_c, a))
        d = np.maximum(a, 0.0)
    z, cols_h = _conv_forward(d, p["head.w"], p["head.b"], keep)
    out = softplus(z)
    caches = {"left": cl, "right": cr, "dec": dec, "head": (d.shape, cols_h)}
    return ForwardTrace(out, fl, fr, fused, z, caches)


def forward(net: DualNet, left_clue, right_clue) -> np.ndarray:
    """Predicted disparity, shape ``(N, 1, H, W)``, same spatial extent as the clues."""
    return forward_trace(net, left_clue, right_clue, keep=False).output


def backward_from_output(net: DualNet, tr: ForwardTrace, dout: np.ndarray) -> dict:
    """Reverse pass given the gradient of the loss w.r.t. the network output."""
    p = net.params
    grads = {}
    dz = dout * _sigmoid(tr.logits)
    d_shape, cols_h = tr.caches["head"]
    dd, grads["head.w"], grads["head.b"] = _conv_backward(dz, cols_h, d_shape, p["head.w"])

    dfused = [None] * net.scales
    for t in reversed(range(net.scales)):
        u_shape, cols_r, r_shape, cols_c, a = tr.caches["dec"][t]
        da = dd * (a > 0)
        dr, grads[f"dec{t}.conv.w"], grads[f"dec{t}.conv.b"] = _conv_backward(
            da, cols_c, r_shape, p[f"dec{t}.conv.w"]
        )
        s = net.scales - 2 - t
        if s >= 0:
            dfused[s] = dr
        du, grads[f"dec{t}.reduce.w"], grads[f"dec{t}.reduce.b"] = _conv_backward(
            dr, cols_r, u_shape, p[f"dec{t}.reduce.w"]
        )
        dd = _upsample_backward(du)
    dfused[-1] = dd

    dl = [g * b for g, b in zip(dfused, tr.right_features)]
    dr_ = [g * a for g, a in zip(dfused, tr.left_features)]
    _encode_backward(net, "left", dl, tr.caches["left"], grads)
    _encode_backward(net, "right", dr_, tr.caches["right"], grads)
    return {k: grads[k] for k in p}


def masked_l1(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None):
    """Mean over samples of each sample's mean absolute error on its valid pixels.

    Returns ``(loss, per_sample_losses, dloss/dpred)``.
    """
    pred = as_batch(pred)
    gt = as_batch(gt)
    mask = np.ones(gt.shape, bool) if mask is None else as_batch(mask).astype(bool)
    if gt.shape != mask.shape or gt.shape[1:] != pred.shape[1:] or gt.shape[0] not in (1, pred.shape[0]):
        raise InvalidInputError(f"shapes differ: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}")
    gt = np.broadcast_to(gt, pred.shape)
    mask = np.broadcast_to(mask, pred.shape)
    n = pred.shape[0]
    counts = mask.reshape(n, -1).sum(axis=1).astype(np.float64)
    if np.any(counts == 0):
        raise InvalidInputError("a sample has no valid pixels")
    diff = pred - gt
    per = (np.abs(diff) * mask).reshape(n, -1).sum(axis=1) / counts
    grad = np.sign(diff) * mask / (counts[:, None, None, None] * n)
    return float(per.mean()), per, grad


def loss_and_grads(net: DualNet, left_clue, right_clue, gt, mask=None):
    tr = forward_trace(net, left_clue, right_clue)
    loss, per, dout = masked_l1(tr.output, gt, mask)
    return loss, backward_from_output(net, tr, dout)


def backward(net: DualNet, sample) -> dict:
    """Exact gradients of the masked L1 loss on ``sample`` for every parameter."""
    _, grads = loss_and_grads(net, sample.left_clue, sample.right_clue, sample.gt_disparity, sample.valid)
    return grads


def sample_loss(net: DualNet, sample) -> float:
    out = forward(net, sample.left_clue, sample.right_clue)
    return masked_l1(out, sample.gt_disparity, sample.valid)[0]


def _relu_inputs(tr: ForwardTrace) -> list:
    pre = []
    for side in ("left", "right"):
        for c in tr.caches[side]:
            pre += [c[2], c[5]]
    pre += [c[4] for c in tr.caches["dec"]]
    return pre


def _pattern_changed(a: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Per batch slot of ``a``: does its sign pattern differ from ``ref`` anywhere?"""
    return ((a > 0) != (ref > 0)).reshape(a.shape[0], -1).any(axis=1)


@dataclass
class GradCheck:
    """Finite-difference gradients plus bookkeeping about activation kinks.

    ``eps_used`` holds the step finally used for each element.  An element is
    re-evaluated with a smaller step whenever a +/- step changes the on/off
    pattern of any ReLU or the sign of any L1 residual, because the central
    difference is then not an estimate of the derivative at the point.
    ``unresolved`` counts elements still straddling a kink at ``min_eps``.
    """

    grads: dict
    eps_used: dict
    unresolved: dict


def numerical_gradient(net: DualNet, sample, eps: float = 1e-3, names=None, chunk: int = 256,
                       min_eps: float = 1e-7, shrink: float = 10.0) -> GradCheck:
    """Central finite differences of the loss for every element of the selected parameters.

    Only forward passes are used.  Perturbations are evaluated in batches:
    one batch slot per (element, sign) pair, each with its own copy of the
    layer that owns the parameter.
    """
    left, right = as_batch(sample.left_clue), as_batch(sample.right_clue)
    gt, valid = as_batch(sample.gt_disparity), as_batch(sample.valid)
    base = forward_trace(net, left, right, keep=False)
    base_pre = _relu_inputs(base)
    base_sign = np.sign(base.output - gt) * valid

    out = GradCheck({}, {}, {})
    for name in names or list(net.params):
        layer = name.rsplit(".", 1)[0]
        wname, bname = f"{layer}.w", f"{layer}.b"
        w0, b0 = net.params[wname], net.params[bname]
        target = net.params[name]
        g = np.zeros(target.size)
        used = np.zeros(target.size)
        pending = np.arange(target.size)
        step = eps
        while pending.size and step >= min_eps:
            still = []
            for c in range(0, pending.size, chunk):
                idx = pending[c : c + chunk]
                m = idx.size
                params = dict(net.params)
                params[wname] = _SlotPerturbation(
                    w0, b0, name == bname, np.repeat(idx, 2), np.tile([step, -step], m)
                )
                tr = forward_trace(net, left, right, params, keep=False)
                _, per, _ = masked_l1(tr.output, gt, valid)
                g[idx] = (per[0::2] - per[1::2]) / (2 * step)
                used[idx] = step
                kink = _pattern_changed(np.sign(tr.output - gt) * valid, base_sign)
                for a, ref in zip(_relu_inputs(tr), base_pre):
                    if a.shape[0] > 1:
                        kink |= _pattern_changed(a, ref)
                kink = kink[0::2] | kink[1::2]
                still.append(idx[kink])
            pending = np.concatenate(still)
            step /= shrink
        out.grads[name] = g.reshape(target.shape)
        out.eps_used[name] = used.reshape(target.shape)
        out.unresolved[name] = int(pending.size)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """``|a - b| / max(|a| + |b|, floor)`` in the Euclidean norm of the whole array."""
    num = np.linalg.norm(np.ravel(a) - np.ravel(b))
    den = max(np.linalg.norm(np.ravel(a)) + np.linalg.norm(np.ravel(b)), floor)
    return float(num / den)


# ----------------------------------------------------------------- data


def monocular_clue(img) -> np.ndarray:
    """Stand-in for a monocular depth-clue backbone: the image itself, rescaled from [0, 1] to [-1, 1]."""
    return 2.0 * np.asarray(img, dtype=np.float64) - 1.0


@dataclass(frozen=True)
class StereogramSample:
    left_clue: np.ndarray
    right_clue: np.ndarray
    gt_disparity: np.ndarray
    valid: np.ndarray
    region: tuple  # (row0, row1, col0, col1) of the shifted rectangle


def make_stereogram(seed: int, extent=(32, 32), max_shift: int = 4, density: float = 0.5,
                    region_frac=(0.7, 0.9)) -> StereogramSample:
    """Random-dot pair with a static background and one rectangle displaced by ``max_shift`` px.

    Clues are the dot images passed through :func:`monocular_clue`.
    Inside the rectangle ``right[i, j] = left[i, j - max_shift]`` (column
    index clamped at 0; clamped pixels are masked out).  Rectangle sides are
    drawn uniformly from ``region_frac`` times the image sides.  Ground truth is
    ``max_shift`` inside the rectangle, 0 elsewhere.

    The default rectangle covers roughly half to four fifths of the image.
    Keeping displaced pixels in the majority makes the best constant
    prediction under L1 equal ``max_shift`` rather than 0, which is
    unreachable through softplus and pulls training into saturation.
    """
    h, w = extent
    d = int(max_shift)
    if d != max_shift or d < 0:
        raise InvalidParameterError(f"shift must be a non-negative integer, got {max_shift}")
    if not d < w / 4:
        raise InvalidParameterError(f"shift {d} must be < width/4 = {w / 4}")
    rng = np.random.default_rng(seed)
    left = (rng.random((h, w)) < density).astype(np.float64)
    lo, hi = region_frac
    rh = int(rng.integers(max(1, round(lo * h)), max(1, round(hi * h)) + 1))
    rw = int(rng.integers(max(1, round(lo * w)), max(1, round(hi * w)) + 1))
    r0 = int(rng.integers(0, h - rh + 1))
    c0 = int(rng.integers(0, w - rw + 1))
    r1, c1 = r0 + rh, c0 + rw

    left = monocular_clue(left)
    right = left.copy()
    gt = np.zeros((h, w))
    valid = np.ones((h, w), bool)
    cols = np.arange(c0, c1)
    src = cols - d
    right[r0:r1, c0:c1] = left[r0:r1, np.maximum(src, 0)]
    gt[r0:r1, c0:c1] = d
    valid[r0:r1, c0:c1] = (src >= 0)[None, :]
    return StereogramSample(left, right, gt, valid, (r0, r1, c0, c1))


def make_dataset(n: int, seed: int = 0, extent=(32, 32), max_shift: int = 4) -> list[StereogramSample]:
    seeds = np.random.SeedSequence(seed).generate_state(n)
    return [make_stereogram(int(s), extent, max_shift) for s in seeds]


def _stack_samples(samples):
    return (
        np.stack([s.left_clue for s in samples])[:, None],
        np.stack([s.right_clue for s in samples])[:, None],
        np.stack([s.gt_disparity for s in samples])[:, None],
        np.stack([s.valid for s in samples])[:, None],
    )


def dataset_loss(net: DualNet, dataset, batch_size: int = 50) -> float:
    per = []
    for i in range(0, len(dataset), batch_size):
        l, r, g, m = _stack_samples(dataset[i : i + batch_size])
        per.extend(masked_l1(forward(net, l, r), g, m)[1])
    return math.fsum(per) / len(per)


@dataclass
class TrainResult:
    net: DualNet
    losses: list  # mean training loss of each epoch
    initial_loss: float


class Adam:
    """Adam update rule over a parameter dict (in place)."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params: dict, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k, p in params.items():
            p -= self.lr * grads[k]


OPTIMIZERS = {"adam": Adam, "sgd": SGD}
DEFAULT_LR = {"adam": 1e-3, "sgd": 1e-2}


def train_toy(net: DualNet, dataset, epochs: int = 30, lr: float | None = None, batch_size: int = 8,
              seed: int = 0, optimizer: str = "adam", log=None) -> TrainResult:
    """Mini-batch training on the masked L1 loss.

    ``optimizer`` is ``"adam"`` (default, lr 1e-3) or ``"sgd"`` (plain SGD,
    lr 1e-2).  The input net is not modified.  Sample order is reshuffled
    every epoch from ``seed``, so a fixed seed gives a bit-identical loss
    curve.  ``initial_loss`` is the dataset loss before any update.
    """
    if not dataset:
        raise InvalidInputError("training set is empty")
    if optimizer not in OPTIMIZERS:
        raise InvalidParameterError(f"unknown optimizer {optimizer!r}; choose from {sorted(OPTIMIZERS)}")
    lr = DEFAULT_LR[optimizer] if lr is None else lr
    if epochs < 0 or lr < 0 or batch_size < 1:
        raise InvalidParameterError(f"bad schedule: epochs={epochs}, lr={lr}, batch_size={batch_size}")
    net = net.copy()
    opt = OPTIMIZERS[optimizer](net.params, lr)
    rng = np.random.default_rng(seed)
    initial = dataset_loss(net, dataset)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        per_sample = []
        for b in range(0, len(order), batch_size):
            batch = [dataset[i] for i in order[b : b + batch_size]]
            l, r, g, m = _stack_samples(batch)
            tr = forward_trace(net, l, r)
            loss, per, dout = masked_l1(tr.output, g, m)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {b // batch_size} "
                    f"({optimizer}, lr={lr}); {int(np.sum(~np.isfinite(tr.output)))} of "
                    f"{tr.output.size} outputs non-finite"
                )
            opt.step(net.params, backward_from_output(net, tr, dout))
            per_sample.extend(per)
        losses.append(math.fsum(per_sample) / len(per_sample))
        if log is not None:
            log(epoch, losses[-1])
    return TrainResult(net, losses, initial)


def region_means(net: DualNet, dataset) -> tuple[float, float]:
    """Mean prediction over shifted pixels and over static pixels, pooled over ``dataset``."""
    shifted, static = [], []
    for i in range(0, len(dataset), 50):
        chunk = dataset[i : i + 50]
        l, r, g, m = _stack_samples(chunk)
        out = forward(net, l, r)
        shifted.append(out[(g > 0) & m])
        static.append(out[(g == 0) & m])
    return float(np.concatenate(shifted).mean()), float(np.concatenate(static).mean())


# ----------------------------------------------------------------- storage


def save_net(path, net: DualNet, extra: dict | None = None) -> None:
    """Binary container: magic, u64 little-endian header length, JSON header, float64 LE payload."""
    entries = []
    offset = 0
    for name, arr in net.params.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "format": "duonet",
        "version": 1,
        "dtype": "<f8",
        "widths": list(net.widths),
        "seed": net.seed,
        "params": entries,
        "config": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for arr in net.params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_net(path) -> tuple[DualNet, dict]:
    from .exceptions import FormatError

    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise FormatError("not a duonet container", 0, path)
    if len(buf) < 16:
        raise FormatError("truncated header length", len(buf), path)
    (hlen,) = struct.unpack("<Q", buf[8:16])
    try:
        header = json.loads(buf[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad JSON header: {exc}", 16, path) from None
    base = 16 + hlen
    params = {}
    for e in header["params"]:
        count = int(np.prod(e["shape"]))
        start = base + e["offset"]
        if start + 8 * count > len(buf):
            raise FormatError(f"truncated payload for {e['name']}", len(buf), path)
        params[e["name"]] = np.frombuffer(buf, "<f8", count, start).reshape(e["shape"]).copy()
    return DualNet(params, tuple(header["widths"]), header.get("seed")), header


def write_loss_csv(path, losses, initial: float | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        if initial is not None:
            w.writerow([0, repr(float(initial))])
        for i, v in enumerate(losses, start=1):
            w.writerow([i, repr(float(v))])
