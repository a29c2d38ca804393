"""Differentiable operations on :class:`~bandstep.nn.tensor.Tensor`.

Every op computes forward with numpy and, when recording is enabled,
attaches vector-Jacobian closures.  Convolutions loop over kernel taps
and batch each tap through a single matmul, so the heavy lifting stays
inside BLAS.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from ..dsp import StftConfig, ola_norm
from ..errors import InvalidArgumentError
from .tensor import Tensor, astensor, grad_enabled

_TWO_PI = 2.0 * np.pi
_NORM_TINY = 1e-12


def _make(data, pairs):
    """Build the output tensor, keeping only vjps that can matter."""
    if not grad_enabled():
        return Tensor(data)
    vjps = tuple((p, fn) for p, fn in pairs if p.requires_grad)
    if not vjps:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _vjps=vjps)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def _as_scalar(v):
    """Python float for constants so numpy's weak promotion keeps the dtype."""
    if isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool):
        return float(v)
    return None


def add(a, b) -> Tensor:
    if _as_scalar(a) is not None:
        a, b = b, a
    s = _as_scalar(b)
    if s is not None:
        a = astensor(a)
        return _make(a.data + s, [(a, lambda g: g)])
    a, b = astensor(a), astensor(b)
    out = a.data + b.data
    return _make(out, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ])


def sub(a, b) -> Tensor:
    sa, sb = _as_scalar(a), _as_scalar(b)
    if sb is not None:
        a = astensor(a)
        return _make(a.data - sb, [(a, lambda g: g)])
    if sa is not None:
        b = astensor(b)
        return _make(sa - b.data, [(b, lambda g: -g)])
    a, b = astensor(a), astensor(b)
    out = a.data - b.data
    return _make(out, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(-g, b.data.shape)),
    ])


def mul(a, b) -> Tensor:
    if _as_scalar(a) is not None:
        a, b = b, a
    s = _as_scalar(b)
    if s is not None:
        a = astensor(a)
        return _make(a.data * s, [(a, lambda g: g * s)])
    a, b = astensor(a), astensor(b)
    out = a.data * b.data
    return _make(out, [
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ])


def div(a, b) -> Tensor:
    sa, sb = _as_scalar(a), _as_scalar(b)
    if sb is not None:
        a = astensor(a)
        return _make(a.data / sb, [(a, lambda g: g / sb)])
    if sa is not None:
        b = astensor(b)
        out = sa / b.data
        return _make(out, [(b, lambda g: -g * sa / (b.data * b.data))])
    a, b = astensor(a), astensor(b)
    out = a.data / b.data
    return _make(out, [
        (a, lambda g: _unbroadcast(g / b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)),
    ])


def neg(a) -> Tensor:
    a = astensor(a)
    return _make(-a.data, [(a, lambda g: -g)])


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------

def exp(a) -> Tensor:
    a = astensor(a)
    out = np.exp(a.data)
    return _make(out, [(a, lambda g: g * out)])


def cos(a) -> Tensor:
    a = astensor(a)
    return _make(np.cos(a.data), [(a, lambda g: g * -np.sin(a.data))])


def sin(a) -> Tensor:
    a = astensor(a)
    return _make(np.sin(a.data), [(a, lambda g: g * np.cos(a.data))])


def absolute(a) -> Tensor:
    """|a| with subgradient 0 at 0."""
    a = astensor(a)
    return _make(np.abs(a.data), [(a, lambda g: g * np.sign(a.data))])


def relu(a) -> Tensor:
    a = astensor(a)
    mask = a.data > 0
    return _make(a.data * mask, [(a, lambda g: g * mask)])


def leaky_relu(a, slope: float = 0.1) -> Tensor:
    a = astensor(a)
    pos = a.data > 0
    scale = np.where(pos, 1.0, slope).astype(a.data.dtype)
    return _make(a.data * scale, [(a, lambda g: g * scale)])


def gelu(a) -> Tensor:
    """Exact GELU: x * Phi(x) with Phi the standard normal CDF."""
    a = astensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    out = x * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return g * (cdf + x * pdf)

    return _make(out.astype(x.dtype), [(a, vjp)])


def atan2(y, x) -> Tensor:
    """Elementwise atan2(y, x); both gradients are 0 where y = x = 0."""
    y, x = astensor(y), astensor(x)
    denom = y.data * y.data + x.data * x.data
    zero = denom == 0
    safe = np.where(zero, 1.0, denom)
    out = np.arctan2(y.data, x.data)
    out = np.where(zero, 0.0, out).astype(y.data.dtype)
    return _make(out, [
        (y, lambda g: np.where(zero, 0.0, g * x.data / safe).astype(y.data.dtype)),
        (x, lambda g: np.where(zero, 0.0, -g * y.data / safe).astype(x.data.dtype)),
    ])


def wrap_principal(a) -> Tensor:
    """Wrap values to the principal interval [-pi, pi].

    The integer multiple of 2*pi is treated as a constant, so the
    gradient passes through unchanged (the wrap is piecewise identity).
    """
    a = astensor(a)
    out = a.data - _TWO_PI * np.round(a.data / _TWO_PI)
    return _make(out.astype(a.data.dtype), [(a, lambda g: g)])


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = astensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).astype(a.data.dtype)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g2, a.data.shape).astype(a.data.dtype)

    return _make(np.asarray(out), [(a, vjp)])


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = astensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[i] for i in np.atleast_1d(axis)])
    inv = 1.0 / float(count)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g * inv, a.data.shape).astype(a.data.dtype)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g2 * inv, a.data.shape).astype(a.data.dtype)

    return _make(np.asarray(out), [(a, vjp)])


def reshape(a, shape) -> Tensor:
    a = astensor(a)
    return _make(a.data.reshape(shape), [(a, lambda g: g.reshape(a.data.shape))])


def transpose(a, axes) -> Tensor:
    a = astensor(a)
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), [(a, lambda g: g.transpose(inv))])


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    a = astensor(a)
    if start < 0 or start + length > a.data.shape[axis]:
        raise InvalidArgumentError(
            f"narrow [{start}:{start + length}) out of range for axis {axis} "
            f"of shape {a.data.shape}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return full

    return _make(a.data[idx].copy(), [(a, vjp)])


def concat(tensors, axis: int) -> Tensor:
    tensors = [astensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    pairs = []
    for i, t in enumerate(tensors):
        lo, hi = int(offsets[i]), int(offsets[i + 1])

        def vjp(g, lo=lo, hi=hi):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            return g[tuple(idx)]

        pairs.append((t, vjp))
    return _make(out, pairs)


def l2_norm(a, axis: int, keepdims: bool = True) -> Tensor:
    """Euclidean norm along ``axis``; subgradient 0 where the norm is 0."""
    a = astensor(a)
    n = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))

    def vjp(g):
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (g2 * a.data / np.maximum(n, _NORM_TINY)).astype(a.data.dtype)

    out = n if keepdims else np.squeeze(n, axis=axis)
    return _make(out, [(a, vjp)])


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def layer_norm(x, gamma, beta, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize over ``axis`` and apply a per-position affine transform.

    ``gamma`` and ``beta`` are 1-D with length ``x.shape[axis]``.
    """
    x, gamma, beta = astensor(x), astensor(gamma), astensor(beta)
    ax = axis % x.data.ndim
    if gamma.data.shape != (x.data.shape[ax],) or beta.data.shape != gamma.data.shape:
        raise InvalidArgumentError("layer_norm affine params must match the normalized axis")
    bshape = [1] * x.data.ndim
    bshape[ax] = x.data.shape[ax]
    gb = gamma.data.reshape(bshape)
    bb = beta.data.reshape(bshape)

    mu = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    out = xh * gb + bb
    other = tuple(i for i in range(x.data.ndim) if i != ax)

    def vjp_x(g):
        gxh = g * gb
        t1 = gxh.mean(axis=ax, keepdims=True)
        t2 = (gxh * xh).mean(axis=ax, keepdims=True)
        return (inv * (gxh - t1 - xh * t2)).astype(x.data.dtype)

    return _make(out.astype(x.data.dtype), [
        (x, vjp_x),
        (gamma, lambda g: (g * xh).sum(axis=other).astype(gamma.data.dtype)),
        (beta, lambda g: g.sum(axis=other).astype(beta.data.dtype)),
    ])


def grn(x, gamma, beta, eps: float = 1e-6, channel_axis: int = -1) -> Tensor:
    """Global response normalization with a built-in residual.

    Per sample, each channel's L2 norm over the positional axis is divided
    by the cross-channel mean of those norms; the result gates the input:
    ``gamma * (x * n) + beta + x``.  Works on 3-D inputs where one
    non-batch axis is the channel axis and the other holds positions.
    """
    x = astensor(x)
    if x.data.ndim != 3:
        raise InvalidArgumentError("grn expects a 3-D (batch, positions, channels) layout")
    ch = channel_axis % 3
    if ch == 0:
        raise InvalidArgumentError("grn channel_axis cannot be the batch axis")
    pos = 3 - ch  # the other non-batch axis
    c = x.data.shape[ch]
    gamma, beta = astensor(gamma), astensor(beta)
    bshape = [1, 1, 1]
    bshape[ch] = c
    gamma_r = reshape(gamma, tuple(bshape))
    beta_r = reshape(beta, tuple(bshape))
    gx = l2_norm(x, axis=pos, keepdims=True)
    nx = div(gx, add(mean(gx, axis=ch, keepdims=True), eps))
    return add(add(mul(mul(x, nx), gamma_r), beta_r), x)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def _check_conv(c_in: int, c_out: int, c_per_group: int, groups: int, where: str):
    if groups < 1 or c_in % groups or c_out % groups:
        raise InvalidArgumentError(f"{where}: groups={groups} must divide in={c_in}, out={c_out}")
    if c_per_group != c_in // groups:
        raise InvalidArgumentError(
            f"{where}: weight expects {c_per_group} input channels per group, "
            f"got {c_in} channels with groups={groups}")


def conv1d(x, w, b=None, stride: int = 1, padding: int = 0,
           dilation: int = 1, groups: int = 1) -> Tensor:
    """Cross-correlation over (batch, channel, time).

    ``w`` is (c_out, c_in/groups, k); ``b`` is (c_out,) or None.
    """
    x, w = astensor(x), astensor(w)
    bt = astensor(b) if b is not None else None
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise InvalidArgumentError("conv1d expects x (B,C,T) and w (O,C/g,K)")
    bsz, c_in, t_in = x.data.shape
    c_out, c_per_group, k = w.data.shape
    _check_conv(c_in, c_out, c_per_group, groups, "conv1d")
    t_out = (t_in + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    if t_out < 1:
        raise InvalidArgumentError(
            f"conv1d: kernel span {dilation * (k - 1) + 1} exceeds padded length "
            f"{t_in + 2 * padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    span = (t_out - 1) * stride + 1
    cog = c_out // groups
    depthwise = groups > 1 and c_per_group == 1 and cog == 1

    # (B, C, t_out, k) gather view over taps; tensordot folds it into one
    # GEMM per conv (per group when grouped), with batch and time as the
    # GEMM columns.  Per-tap broadcast matmul is ~20x slower here.
    taps = np.lib.stride_tricks.sliding_window_view(
        xp, dilation * (k - 1) + 1, axis=2)[:, :, ::stride, ::dilation]
    if groups == 1:
        acc = np.tensordot(w.data, taps, axes=([1, 2], [1, 3]))
        out = np.ascontiguousarray(acc.transpose(1, 0, 2))
    elif depthwise:
        out = np.zeros((bsz, c_out, t_out), dtype=x.data.dtype)
        for i in range(k):
            sl = slice(i * dilation, i * dilation + span, stride)
            out += w.data[:, 0, i][None, :, None] * xp[:, :, sl]
    else:
        wg = w.data.reshape(groups, cog, c_per_group, k)
        acc = np.empty((groups, cog, bsz, t_out), dtype=x.data.dtype)
        for gi in range(groups):
            lo = gi * c_per_group
            acc[gi] = np.tensordot(wg[gi], taps[:, lo:lo + c_per_group],
                                   axes=([1, 2], [1, 3]))
        out = np.ascontiguousarray(
            acc.reshape(c_out, bsz, t_out).transpose(1, 0, 2))
    if bt is not None:
        out += bt.data[None, :, None]

    def vjp_x(g):
        if depthwise:
            gxp = np.zeros(xp.shape, dtype=xp.dtype)
            for i in range(k):
                sl = slice(i * dilation, i * dilation + span, stride)
                gxp[:, :, sl] += w.data[:, 0, i][None, :, None] * g
            return gxp[:, :, padding:padding + t_in] if padding else gxp
        # contiguous (k, C, O) tap weights: a strided 2-D operand would
        # push matmul off the BLAS fast path (measured ~14x slower)
        if groups == 1:
            wt = np.ascontiguousarray(w.data.transpose(2, 1, 0))
        else:
            # dense block-diagonal weight: each tap becomes one full GEMM,
            # which beats exact-FLOP grouped contractions on this backend
            wt = np.zeros((k, c_in, c_out), dtype=w.data.dtype)
            wg = w.data.reshape(groups, cog, c_per_group, k)
            for gi in range(groups):
                wt[:, gi * c_per_group:(gi + 1) * c_per_group,
                   gi * cog:(gi + 1) * cog] = wg[gi].transpose(2, 1, 0)
        gf = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(c_out, -1)
        gacc = np.zeros((c_in, bsz, xp.shape[-1]), dtype=xp.dtype)
        for i in range(k):
            sl = slice(i * dilation, i * dilation + span, stride)
            gacc[:, :, sl] += (wt[i] @ gf).reshape(c_in, bsz, t_out)
        if padding:
            gacc = gacc[:, :, padding:padding + t_in]
        return np.ascontiguousarray(gacc.transpose(1, 0, 2))

    def vjp_w(g):
        if groups == 1:
            return np.tensordot(g, taps, axes=([0, 2], [0, 2]))
        gw = np.zeros(w.data.shape, dtype=w.data.dtype)
        if depthwise:
            for i in range(k):
                sl = slice(i * dilation, i * dilation + span, stride)
                gw[:, 0, i] = (g * xp[:, :, sl]).sum(axis=(0, 2))
        else:
            gg = g.reshape(bsz, groups, cog, t_out)
            gwg = gw.reshape(groups, cog, c_per_group, k)
            for gi in range(groups):
                lo = gi * c_per_group
                gwg[gi] = np.tensordot(gg[:, gi], taps[:, lo:lo + c_per_group],
                                       axes=([0, 2], [0, 2]))
        return gw

    pairs = [(x, vjp_x), (w, vjp_w)]
    if bt is not None:
        pairs.append((bt, lambda g: g.sum(axis=(0, 2))))
    return _make(out, pairs)


def conv2d(x, w, b=None, stride=(1, 1), padding=(0, 0), groups: int = 1) -> Tensor:
    """Cross-correlation over (batch, channel, height, width).

    ``w`` is (c_out, c_in/groups, kh, kw); ``b`` is (c_out,) or None.
    """
    x, w = astensor(x), astensor(w)
    bt = astensor(b) if b is not None else None
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise InvalidArgumentError("conv2d expects x (B,C,H,W) and w (O,C/g,KH,KW)")
    bsz, c_in, h_in, w_in = x.data.shape
    c_out, c_per_group, kh, kw = w.data.shape
    _check_conv(c_in, c_out, c_per_group, groups, "conv2d")
    sh, sw = stride
    ph, pw = padding
    h_out = (h_in + 2 * ph - kh) // sh + 1
    w_out = (w_in + 2 * pw - kw) // sw + 1
    if h_out < 1 or w_out < 1:
        raise InvalidArgumentError("conv2d: kernel exceeds padded input extent")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    span_h = (h_out - 1) * sh + 1
    span_w = (w_out - 1) * sw + 1
    cog = c_out // groups
    if groups != 1 and not (c_per_group == 1 and cog == 1):
        raise InvalidArgumentError("conv2d supports groups=1 or depthwise only")
    depthwise = groups > 1

    # (B, C, h_out, w_out, kh, kw) gather view; tensordot folds the whole
    # conv into one GEMM with (batch, H, W) as the columns
    taps = np.lib.stride_tricks.sliding_window_view(
        xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    if depthwise:
        out = np.zeros((bsz, c_out, h_out, w_out), dtype=x.data.dtype)
        for i in range(kh):
            sh_sl = slice(i, i + span_h, sh)
            for j in range(kw):
                sw_sl = slice(j, j + span_w, sw)
                out += w.data[:, 0, i, j][None, :, None, None] * xp[:, :, sh_sl, sw_sl]
    else:
        acc = np.tensordot(w.data, taps, axes=([1, 2, 3], [1, 4, 5]))
        out = np.ascontiguousarray(acc.transpose(1, 0, 2, 3))
    if bt is not None:
        out += bt.data[None, :, None, None]

    def vjp_x(g):
        if not depthwise:
            # contiguous (kh, kw, C, O) tap weights keep matmul on the BLAS
            # fast path (strided 2-D operands are ~14x slower)
            wt = np.ascontiguousarray(w.data.transpose(2, 3, 1, 0))
            gf = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(c_out, -1)
            gacc = np.zeros((c_in, bsz) + xp.shape[2:], dtype=xp.dtype)
            for i in range(kh):
                sh_sl = slice(i, i + span_h, sh)
                for j in range(kw):
                    sw_sl = slice(j, j + span_w, sw)
                    gacc[:, :, sh_sl, sw_sl] += (
                        wt[i, j] @ gf).reshape(c_in, bsz, h_out, w_out)
            if ph or pw:
                gacc = gacc[:, :, ph:ph + h_in, pw:pw + w_in]
            return np.ascontiguousarray(gacc.transpose(1, 0, 2, 3))
        gxp = np.zeros(xp.shape, dtype=xp.dtype)
        for i in range(kh):
            sh_sl = slice(i, i + span_h, sh)
            for j in range(kw):
                sw_sl = slice(j, j + span_w, sw)
                gxp[:, :, sh_sl, sw_sl] += w.data[:, 0, i, j][None, :, None, None] * g
        return gxp[:, :, ph:ph + h_in, pw:pw + w_in] if ph or pw else gxp

    def vjp_w(g):
        if not depthwise:
            return np.tensordot(g, taps, axes=([0, 2, 3], [0, 2, 3]))
        gw = np.zeros_like(w.data)
        for i in range(kh):
            sh_sl = slice(i, i + span_h, sh)
            for j in range(kw):
                sw_sl = slice(j, j + span_w, sw)
                gw[:, 0, i, j] = (g * xp[:, :, sh_sl, sw_sl]).sum(axis=(0, 2, 3))
        return gw

    pairs = [(x, vjp_x), (w, vjp_w)]
    if bt is not None:
        pairs.append((bt, lambda g: g.sum(axis=(0, 2, 3))))
    return _make(out, pairs)


# ---------------------------------------------------------------------------
# differentiable synthesis
# ---------------------------------------------------------------------------

def istft_synth(re, im, cfg: StftConfig, n_samples: int | None = None) -> Tensor:
    """Batched inverse STFT as one linear op: (B, F, T) spectra to (B, n) audio.

    Forward matches :func:`bandstep.dsp.istft_array` (windowed overlap-add
    with squared-window normalization, center crop).  The backward pass is
    the exact adjoint: frame the gradient, window it, and take a forward
    rfft scaled by c_k/n_fft where c_k is 1 at DC and Nyquist, else 2 (the
    Hermitian bin multiplicity).  Imag gradients at DC and Nyquist are 0
    because the synthesis ignores those components.
    """
    re, im = astensor(re), astensor(im)
    if re.data.shape != im.data.shape or re.data.ndim != 3:
        raise InvalidArgumentError("istft_synth expects matching (B, F, T) re/im parts")
    bsz, n_bins, t_count = re.data.shape
    if n_bins != cfg.n_bins:
        raise InvalidArgumentError(f"expected {cfg.n_bins} bins for n_fft={cfg.n_fft}, got {n_bins}")
    win = cfg.window.astype(re.data.dtype)
    pad = cfg.pad
    full_len = cfg.win_len + (t_count - 1) * cfg.hop
    if n_samples is None:
        lo, out_len = 0, full_len
    else:
        out_len = n_samples
        lo = pad
        if lo + out_len > full_len:
            raise InvalidArgumentError(
                f"{t_count} frames cover {full_len - 2 * pad} centered samples, "
                f"need {out_len}")

    z = (re.data + 1j * im.data).transpose(0, 2, 1)
    segs = np.fft.irfft(z, n=cfg.n_fft, axis=2)[:, :, :cfg.win_len] * win
    acc = np.zeros((bsz, full_len), dtype=re.data.dtype)
    for t in range(t_count):
        acc[:, t * cfg.hop:t * cfg.hop + cfg.win_len] += segs[:, t, :]
    norm = np.maximum(ola_norm(t_count, cfg), _NORM_TINY).astype(re.data.dtype)
    acc /= norm
    out = acc[:, lo:lo + out_len].copy()

    scale = np.full(n_bins, 2.0 / cfg.n_fft)
    scale[0] = 1.0 / cfg.n_fft
    scale[-1] = 1.0 / cfg.n_fft
    scale = scale.astype(re.data.dtype)

    cache: dict = {}

    def _spec_grad(g):
        # both streams see the same upstream array; compute the adjoint once
        if cache.get("key") is not id(g):
            gf = np.zeros((bsz, full_len), dtype=g.dtype)
            gf[:, lo:lo + out_len] = g
            gf /= norm
            gseg = np.empty((bsz, t_count, cfg.win_len), dtype=g.dtype)
            for t in range(t_count):
                gseg[:, t, :] = gf[:, t * cfg.hop:t * cfg.hop + cfg.win_len]
            gz = np.fft.rfft(gseg * win, n=cfg.n_fft, axis=2).transpose(0, 2, 1)
            cache["key"] = id(g)
            cache["ref"] = g  # pin g so its id cannot be recycled while cached
            cache["val"] = gz * scale[None, :, None]
        return cache["val"]

    return _make(out, [
        (re, lambda g: np.ascontiguousarray(_spec_grad(g).real)),
        (im, lambda g: np.ascontiguousarray(_spec_grad(g).imag)),
    ])
