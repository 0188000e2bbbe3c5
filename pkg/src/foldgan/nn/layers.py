"""Minimal differentiable layers on numpy arrays (NCHW).

Conventions, fixed so that checkpoints are portable:
  * convolution means cross-correlation (kernels are not flipped);
  * "same" padding is symmetric with the extra pixel on the bottom/right
    when the total is odd, and preserves size/stride on the spatial axes;
  * weights initialise from N(0, 0.02^2), biases from zero, batch-norm
    gamma from one.

Each layer caches what its backward pass needs during forward. Backward
accumulates parameter gradients (+=) and returns the input gradient, so
several loss terms can be summed into the same buffers before an optimizer
step. ``accumulate=False`` skips the parameter buffers, which is how
input-only gradients (for the critic penalty) are extracted.

Piecewise-linear layers additionally support a tangent pass
(forward_tangent / backward_tangent) that re-uses the masks and caches of
the latest forward. Pushing a vector u through the tangent network computes
the directional derivative u . grad_x(f), and backpropagating through the
tangent graph yields its exact (almost-everywhere) parameter gradient.
That is all the machinery a gradient penalty needs, without nested
automatic differentiation.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError

WEIGHT_SIGMA = 0.02


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _same_pads(size: int, k: int, s: int) -> tuple[int, int]:
    out = _ceil_div(size, s)
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2


class ConvGeometry:
    """Resolved spatial bookkeeping for one conv configuration."""

    def __init__(self, h, w, kh, kw, sh, sw, padding):
        if padding not in ("same", "valid"):
            raise ShapeError(f"padding must be 'same' or 'valid', got {padding!r}")
        self.kh, self.kw, self.sh, self.sw = kh, kw, sh, sw
        self.h, self.w = h, w
        if padding == "same":
            self.pt, self.pb = _same_pads(h, kh, sh)
            self.pl, self.pr = _same_pads(w, kw, sw)
            self.oh, self.ow = _ceil_div(h, sh), _ceil_div(w, sw)
        else:
            self.pt = self.pb = self.pl = self.pr = 0
            if h < kh or w < kw:
                raise ShapeError(f"valid conv needs input >= kernel, got {h}x{w} vs {kh}x{kw}")
            self.oh = (h - kh) // sh + 1
            self.ow = (w - kw) // sw + 1
        self._plan = None

    def scatter_plan(self):
        """Sorted segment plan mapping column taps onto padded image cells."""
        if self._plan is None:
            wp = self.w + self.pl + self.pr
            m = (np.arange(self.oh) * self.sh)[:, None, None, None] + np.arange(self.kh)[None, None, :, None]
            n = (np.arange(self.ow) * self.sw)[None, :, None, None] + np.arange(self.kw)[None, None, None, :]
            r = (m * wp + n).reshape(-1)
            order = np.argsort(r, kind="stable")
            sorted_r = r[order]
            starts = np.flatnonzero(np.concatenate(([True], sorted_r[1:] != sorted_r[:-1])))
            targets = sorted_r[starts]
            self._plan = (order, starts, targets)
        return self._plan


def _pad_input(x, g: ConvGeometry):
    if g.pt or g.pb or g.pl or g.pr:
        b, c = x.shape[:2]
        xp = np.zeros((b, c, g.h + g.pt + g.pb, g.w + g.pl + g.pr), dtype=x.dtype)
        xp[:, :, g.pt : g.pt + g.h, g.pl : g.pl + g.w] = x
        return xp
    return x


def _windows(xp, g: ConvGeometry):
    b, c = xp.shape[:2]
    sb, sc, sr, scol = xp.strides
    shape = (b, c, g.oh, g.ow, g.kh, g.kw)
    strides = (sb, sc, sr * g.sh, scol * g.sw, sr, scol)
    return np.lib.stride_tricks.as_strided(xp, shape, strides, writeable=False)


def _im2col(x, g: ConvGeometry):
    """Window matrix (B * OH * OW, C * kh * kw); one contiguous copy."""
    win = _windows(_pad_input(x, g), g)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        x.shape[0] * g.oh * g.ow, -1
    )


def _col2im(dcol, g: ConvGeometry, batch, channels, dtype):
    """Adjoint of _im2col: sum overlapping column taps back onto the image.

    Taps are pre-sorted by target cell (see ConvGeometry.scatter_plan) so the
    overlap sum is one gather plus one segmented reduction instead of a
    Python loop over kernel positions.
    """
    order, starts, targets = g.scatter_plan()
    hp = g.h + g.pt + g.pb
    wp = g.w + g.pl + g.pr
    m = (
        dcol.reshape(batch, g.oh, g.ow, channels, g.kh, g.kw)
        .transpose(1, 2, 4, 5, 0, 3)
        .reshape(-1, batch * channels)
    )
    sums = np.add.reduceat(m[order], starts, axis=0)
    flat = np.zeros((hp * wp, batch * channels), dtype=dtype)
    flat[targets] = sums
    dxp = flat.reshape(hp, wp, batch, channels).transpose(2, 3, 0, 1)
    return np.ascontiguousarray(dxp[:, :, g.pt : g.pt + g.h, g.pl : g.pl + g.w])


def conv_forward(x, weights, g: ConvGeometry):
    """Cross-correlate (B, Cin, H, W) with (Cout, Cin, kh, kw), no bias."""
    col = _im2col(x, g)
    y = col @ weights.reshape(weights.shape[0], -1).T
    return np.ascontiguousarray(
        y.reshape(x.shape[0], g.oh, g.ow, weights.shape[0]).transpose(0, 3, 1, 2)
    )


def conv_backward_weights(dout, x, g: ConvGeometry):
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, dout.shape[1])
    return (dmat.T @ _im2col(x, g)).reshape(dout.shape[1], x.shape[1], g.kh, g.kw)


def conv_backward_input(dout, weights, g: ConvGeometry, dtype=None):
    """Adjoint of conv_forward, mapping (B, Cout, OH, OW) back to (B, Cin, H, W)."""
    dtype = dtype or dout.dtype
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, dout.shape[1])
    dcol = dmat @ weights.reshape(weights.shape[0], -1)
    return _col2im(dcol, g, dout.shape[0], weights.shape[1], dtype)


def gaussian_init(rng, shape, dtype, sigma=WEIGHT_SIGMA):
    return rng.normal(0.0, sigma, size=shape).astype(dtype)


class Layer:
    """Base layer: stateless unless it declares parameters or buffers."""

    def forward(self, x, train=True):
        raise NotImplementedError

    def backward(self, dout, accumulate=True):
        raise NotImplementedError

    def forward_tangent(self, t):
        raise ShapeError(f"{type(self).__name__} is not piecewise-linear; no tangent pass")

    def backward_tangent(self, dt, accumulate=True):
        raise ShapeError(f"{type(self).__name__} is not piecewise-linear; no tangent pass")

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def zero_grad(self):
        for g in self.grads().values():
            g[...] = 0


class Conv2d(Layer):
    """Strided 2D cross-correlation with bias."""

    def __init__(self, c_in, c_out, kernel=(5, 5), stride=(2, 2), padding="same", *, rng, dtype=np.float32):
        self.c_in, self.c_out = c_in, c_out
        self.kh, self.kw = kernel
        self.sh, self.sw = stride
        self.padding = padding
        self.W = gaussian_init(rng, (c_out, c_in, self.kh, self.kw), dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._col = None
        self._tcol = None
        self._g = None

    def _geometry(self, x):
        b, c, h, w = x.shape
        if c != self.c_in:
            raise ShapeError(f"conv expected {self.c_in} input channels, got {c}")
        g = self._g
        if g is None or (g.h, g.w) != (h, w):
            self._g = g = ConvGeometry(h, w, self.kh, self.kw, self.sh, self.sw, self.padding)
        return g

    def _wmat(self):
        return self.W.reshape(self.c_out, -1)

    def _run_forward(self, x, g, cache_attr):
        col = _im2col(x, g)
        setattr(self, cache_attr, col)
        y = col @ self._wmat().T
        return y.reshape(x.shape[0], g.oh, g.ow, self.c_out).transpose(0, 3, 1, 2)

    def _run_backward(self, dout, col, with_bias, accumulate, input_grad):
        g = self._g
        dmat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, self.c_out)
        if accumulate:
            self.dW += (dmat.T @ col).reshape(self.W.shape)
            if with_bias:
                self.db += dmat.sum(axis=0)
        if not input_grad:
            return None
        dcol = dmat @ self._wmat()
        return _col2im(dcol, g, dout.shape[0], self.c_in, dout.dtype)

    def forward(self, x, train=True):
        g = self._geometry(x)
        return self._run_forward(x, g, "_col") + self.b[None, :, None, None]

    def backward(self, dout, accumulate=True, input_grad=True):
        return self._run_backward(dout, self._col, True, accumulate, input_grad)

    def forward_tangent(self, t):
        return np.ascontiguousarray(self._run_forward(t, self._g, "_tcol"))

    def backward_tangent(self, dt, accumulate=True):
        return self._run_backward(dt, self._tcol, False, accumulate, True)

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}


class TConv2d(Layer):
    """Transposed convolution: the exact adjoint of a same-padded strided conv.

    Maps (B, c_in, H, W) to (B, c_out, H * sh, W * sw). Weights are stored as
    (c_in, c_out, kh, kw), i.e. as the kernel of the mirror convolution whose
    backward-input pass this forward is.
    """

    def __init__(self, c_in, c_out, kernel=(5, 5), stride=(2, 2), *, rng, dtype=np.float32):
        self.c_in, self.c_out = c_in, c_out
        self.kh, self.kw = kernel
        self.sh, self.sw = stride
        self.W = gaussian_init(rng, (c_in, c_out, self.kh, self.kw), dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._xmat = None
        self._tmat = None
        self._g = None

    def _geometry(self, x):
        b, c, h, w = x.shape
        if c != self.c_in:
            raise ShapeError(f"tconv expected {self.c_in} input channels, got {c}")
        g = self._g
        if g is None or (g.oh, g.ow) != (h, w):
            # geometry of the mirror conv: input (H*sh, W*sw) -> output (H, W)
            self._g = g = ConvGeometry(h * self.sh, w * self.sw, self.kh, self.kw, self.sh, self.sw, "same")
        return g

    def _wmat(self):
        return self.W.reshape(self.c_in, -1)

    def _run_forward(self, x, g, cache_attr):
        xmat = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(-1, self.c_in)
        setattr(self, cache_attr, xmat)
        dcol = xmat @ self._wmat()
        return _col2im(dcol, g, x.shape[0], self.c_out, x.dtype)

    def _run_backward(self, dout, xmat, with_bias, accumulate, input_grad):
        g = self._g
        col = _im2col(dout, g)
        if accumulate:
            self.dW += (xmat.T @ col).reshape(self.W.shape)
            if with_bias:
                self.db += dout.sum(axis=(0, 2, 3))
        if not input_grad:
            return None
        dmat = col @ self._wmat().T
        return np.ascontiguousarray(
            dmat.reshape(dout.shape[0], g.oh, g.ow, self.c_in).transpose(0, 3, 1, 2)
        )

    def forward(self, x, train=True):
        g = self._geometry(x)
        return self._run_forward(x, g, "_xmat") + self.b[None, :, None, None]

    def backward(self, dout, accumulate=True, input_grad=True):
        return self._run_backward(dout, self._xmat, True, accumulate, input_grad)

    def forward_tangent(self, t):
        return self._run_forward(t, self._g, "_tmat")

    def backward_tangent(self, dt, accumulate=True):
        return self._run_backward(dt, self._tmat, False, accumulate, True)

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}


class Dense(Layer):
    def __init__(self, n_in, n_out, *, rng, dtype=np.float32):
        self.W = gaussian_init(rng, (n_in, n_out), dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None
        self._t = None

    def forward(self, x, train=True):
        if x.ndim != 2:
            raise ShapeError(f"dense expects rank-2 input, got shape {x.shape}")
        if x.shape[1] != self.W.shape[0]:
            raise ShapeError(f"dense expected {self.W.shape[0]} features, got {x.shape[1]}")
        self._x = x
        return x @ self.W + self.b

    def backward(self, dout, accumulate=True, input_grad=True):
        if accumulate:
            self.dW += self._x.T @ dout
            self.db += dout.sum(axis=0)
        if not input_grad:
            return None
        return dout @ self.W.T

    def forward_tangent(self, t):
        self._t = t
        return t @ self.W

    def backward_tangent(self, dt, accumulate=True):
        if accumulate:
            self.dW += self._t.T @ dt
        return dt @ self.W.T

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}


class LeakyReLU(Layer):
    def __init__(self, alpha=0.2):
        self.alpha = alpha
        self._mask = None

    def forward(self, x, train=True):
        self._mask = np.where(x >= 0, x.dtype.type(1), x.dtype.type(self.alpha))
        return x * self._mask

    def backward(self, dout, accumulate=True):
        return dout * self._mask

    def forward_tangent(self, t):
        return t * self._mask

    def backward_tangent(self, dt, accumulate=True):
        return dt * self._mask


class Sigmoid(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x, train=True):
        # exp(-|x|) never overflows; reassemble both branches from it
        e = np.exp(-np.abs(x))
        denom = 1.0 + e
        out = np.where(x >= 0, 1.0 / denom, e / denom)
        self._y = out
        return out

    def backward(self, dout, accumulate=True):
        y = self._y
        return dout * y * (1.0 - y)


class Softmax(Layer):
    """Row-wise softmax over the last axis."""

    def __init__(self):
        self._p = None

    def forward(self, x, train=True):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self._p = e / e.sum(axis=-1, keepdims=True)
        return self._p

    def backward(self, dout, accumulate=True):
        p = self._p
        return p * (dout - (dout * p).sum(axis=-1, keepdims=True))


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout, accumulate=True):
        return dout.reshape(self._shape)

    def forward_tangent(self, t):
        return t.reshape(t.shape[0], -1)

    def backward_tangent(self, dt, accumulate=True):
        return dt.reshape(self._shape)


class Reshape(Layer):
    """Reshape each sample to a fixed per-sample shape."""

    def __init__(self, sample_shape):
        self.sample_shape = tuple(sample_shape)
        self._shape = None

    def forward(self, x, train=True):
        self._shape = x.shape
        return x.reshape((x.shape[0],) + self.sample_shape)

    def backward(self, dout, accumulate=True):
        return dout.reshape(self._shape)

    def forward_tangent(self, t):
        return t.reshape((t.shape[0],) + self.sample_shape)

    def backward_tangent(self, dt, accumulate=True):
        return dt.reshape(self._shape)


class BatchNorm(Layer):
    """Per-channel batch normalisation with running statistics.

    Train mode normalises by the batch mean/variance (biased, over batch and
    spatial axes) and folds them into the running stats with momentum 0.9.
    Inference uses the running stats. Training needs a batch of at least 2.
    """

    def __init__(self, channels, momentum=0.9, eps=1e-5, *, dtype=np.float32):
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    @staticmethod
    def _axes(x):
        if x.ndim == 2:
            return (0,)
        if x.ndim == 4:
            return (0, 2, 3)
        raise ShapeError(f"batch norm supports rank 2 or 4 input, got shape {x.shape}")

    def _expand(self, v, ndim):
        if ndim == 2:
            return v[None, :]
        return v[None, :, None, None]

    def forward(self, x, train=True):
        axes = self._axes(x)
        if train:
            if x.shape[0] < 2:
                raise ShapeError("batch norm needs a batch of at least 2 in train mode")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = x.dtype.type(self.momentum)
            self.running_mean[...] = m * self.running_mean + (1 - m) * mean
            self.running_var[...] = m * self.running_var + (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._expand(mean, x.ndim)) * self._expand(inv_std, x.ndim)
        n = x.size // x.shape[1]
        self._cache = (xhat, inv_std, n, train, axes)
        return self._expand(self.gamma, x.ndim) * xhat + self._expand(self.beta, x.ndim)

    def backward(self, dout, accumulate=True):
        xhat, inv_std, n, train, axes = self._cache
        if accumulate:
            self.dgamma += (dout * xhat).sum(axis=axes)
            self.dbeta += dout.sum(axis=axes)
        gs = self._expand(self.gamma * inv_std, dout.ndim)
        if not train:
            return dout * gs
        mean_d = dout.mean(axis=axes)
        mean_dx = (dout * xhat).mean(axis=axes)
        return gs * (dout - self._expand(mean_d, dout.ndim) - xhat * self._expand(mean_dx, dout.ndim))

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


_PARAM_ATTRS = (("W", "dW"), ("b", "db"), ("gamma", "dgamma"), ("beta", "dbeta"))


class Sequential:
    """An ordered list of named layers with a shared dtype."""

    def __init__(self, named_layers, dtype=np.float32):
        self.names = [n for n, _ in named_layers]
        self.layers = [l for _, l in named_layers]
        if len(set(self.names)) != len(self.names):
            raise ValueError("layer names must be unique")
        self.dtype = np.dtype(dtype)
        self._pbuf = None
        self._gbuf = None

    def fuse_storage(self) -> "Sequential":
        """Repack all parameters (and gradients) as views into two flat buffers.

        Lets the optimizer and zero_grad run as a handful of vector
        operations over one contiguous array instead of one pass per
        parameter tensor. Values are preserved.
        """
        specs = []
        total = 0
        for layer in self.layers:
            for pa, ga in _PARAM_ATTRS:
                if hasattr(layer, pa):
                    arr = getattr(layer, pa)
                    specs.append((layer, pa, ga, arr.shape, arr.size))
                    total += arr.size
        pbuf = np.empty(total, dtype=self.dtype)
        gbuf = np.empty(total, dtype=self.dtype)
        offset = 0
        for layer, pa, ga, shape, size in specs:
            pview = pbuf[offset : offset + size].reshape(shape)
            pview[...] = getattr(layer, pa)
            setattr(layer, pa, pview)
            gview = gbuf[offset : offset + size].reshape(shape)
            gview[...] = getattr(layer, ga)
            setattr(layer, ga, gview)
            offset += size
        self._pbuf = pbuf
        self._gbuf = gbuf
        return self

    def opt_params(self) -> dict[str, np.ndarray]:
        """Parameter dict for the optimizer: one flat entry when fused."""
        if self._pbuf is not None:
            return {"flat": self._pbuf}
        return self.params()

    def opt_grads(self) -> dict[str, np.ndarray]:
        if self._gbuf is not None:
            return {"flat": self._gbuf}
        return self.grads()

    def forward(self, x, train=True):
        out = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            out = layer.forward(out, train=train)
        return out

    def backward(self, dout, accumulate=True, input_grad=True):
        d = np.asarray(dout, dtype=self.dtype)
        first = self.layers[0]
        for layer in reversed(self.layers):
            if layer is first and not input_grad and isinstance(layer, (Conv2d, TConv2d, Dense)):
                return layer.backward(d, accumulate=accumulate, input_grad=False)
            d = layer.backward(d, accumulate=accumulate)
        return d

    def forward_tangent(self, t):
        out = np.asarray(t, dtype=self.dtype)
        for layer in self.layers:
            out = layer.forward_tangent(out)
        return out

    def backward_tangent(self, dt, accumulate=True):
        d = np.asarray(dt, dtype=self.dtype)
        for layer in reversed(self.layers):
            d = layer.backward_tangent(d, accumulate=accumulate)
        return d

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in zip(self.names, self.layers):
            for k, v in layer.params().items():
                out[f"{name}.{k}"] = v
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in zip(self.names, self.layers):
            for k, v in layer.grads().items():
                out[f"{name}.{k}"] = v
        return out

    def zero_grad(self):
        if self._gbuf is not None:
            self._gbuf[...] = 0
            return
        for layer in self.layers:
            layer.zero_grad()

    def state_items(self) -> list[tuple[str, np.ndarray]]:
        """Parameters plus buffers (running stats), in layer order."""
        out = []
        for name, layer in zip(self.names, self.layers):
            for k, v in layer.params().items():
                out.append((f"{name}.{k}", v))
            for k, v in layer.buffers().items():
                out.append((f"{name}.{k}", v))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_items()}

    def load_state(self, state: dict[str, np.ndarray]):
        own = dict(self.state_items())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ShapeError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in own.items():
            src = np.asarray(state[k])
            if src.shape != v.shape:
                raise ShapeError(f"state entry {k} has shape {src.shape}, expected {v.shape}")
            v[...] = src.astype(v.dtype)

    def param_count(self) -> int:
        return sum(int(v.size) for v in self.params().values())

    def astype(self, dtype):
        """Convert parameters, gradients and buffers in place to ``dtype``."""
        dtype = np.dtype(dtype)
        self._pbuf = None
        self._gbuf = None
        for layer in self.layers:
            for holder in ("W", "b", "dW", "db", "gamma", "beta", "dgamma", "dbeta", "running_mean", "running_var"):
                if hasattr(layer, holder):
                    setattr(layer, holder, getattr(layer, holder).astype(dtype))
        self.dtype = dtype
        return self
