"""Numeric kernels: im2col convolution, 2x2 max pooling and matrix multiply.

Tensors are plain numpy arrays in channels-last layout. Every kernel accepts
a single image ``(H, W, C)`` or a batch ``(B, H, W, C)`` and returns the same
rank it was given.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, NumericError

POOL = 2
# Upper bound on im2col elements materialised at once; larger batches are chunked.
_COL_BUDGET = 1 << 25


def check_finite(array: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"non-finite value in {what}")
    return array


def conv_output_extent(extent: int, kernel: int, padding: int) -> int:
    return extent + 2 * padding - kernel + 1


@dataclass(frozen=True)
class ConvGeometry:
    kernel: int
    padding: int
    in_channels: int
    out_channels: int
    stride: int = 1

    def __post_init__(self):
        if self.kernel < 1 or self.padding < 0 or self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError(f"invalid convolution geometry {self}")
        if self.stride != 1:
            raise ConfigurationError("only stride 1 convolutions are supported")

    def output_extent(self, extent: int) -> int:
        out = conv_output_extent(extent, self.kernel, self.padding)
        if out < 1:
            raise ConfigurationError(
                f"convolution output extent {out} < 1 (input {extent}, kernel {self.kernel}, "
                f"padding {self.padding})"
            )
        return out


def _as_batch(x: np.ndarray, name: str = "input") -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ConfigurationError(f"{name} must be HxWxC or BxHxWxC, got shape {x.shape}")


def _kernel_geometry(x: np.ndarray, kernels: np.ndarray, padding: int) -> ConvGeometry:
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ConfigurationError(f"kernels must be k x k x C x F, got shape {kernels.shape}")
    if kernels.shape[2] != x.shape[-1]:
        raise ConfigurationError(
            f"kernel in_channels {kernels.shape[2]} != input channels {x.shape[-1]}"
        )
    return ConvGeometry(kernels.shape[0], padding, kernels.shape[2], kernels.shape[3])


def _chunks(batch: int, per_sample: int):
    step = max(1, _COL_BUDGET // max(per_sample, 1))
    for start in range(0, batch, step):
        yield slice(start, min(start + step, batch))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigurationError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul output")


def im2col(x: np.ndarray, kernel: int, padding: int = 0) -> np.ndarray:
    """Unfold receptive fields into rows of shape ``(B*H'*W', k*k*C)``.

    Rows run over (batch, out_row, out_col) in row-major order; columns run over
    (kernel_row, kernel_col, channel), matching ``kernels.reshape(-1, F)``.
    """
    xb, _ = _as_batch(x)
    b, h, w, c = xb.shape
    oh, ow = conv_output_extent(h, kernel, padding), conv_output_extent(w, kernel, padding)
    if oh < 1 or ow < 1:
        raise ConfigurationError(f"kernel {kernel} with padding {padding} does not fit input {h}x{w}")
    xp = np.pad(xb, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    win = sliding_window_view(xp, (kernel, kernel), axis=(1, 2))  # B, oh, ow, C, k, k
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * oh * ow, kernel * kernel * c)


def col2im(cols: np.ndarray, input_shape: tuple, kernel: int, padding: int = 0) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add rows back onto the (unpadded) input grid."""
    b, h, w, c = input_shape
    oh, ow = conv_output_extent(h, kernel, padding), conv_output_extent(w, kernel, padding)
    cols = cols.reshape(b, oh, ow, kernel, kernel, c)
    out = np.zeros((b, h + 2 * padding, w + 2 * padding, c), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            out[:, i:i + oh, j:j + ow, :] += cols[:, :, :, i, j, :]
    return out[:, padding:padding + h, padding:padding + w, :]


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, padding: int = 0) -> np.ndarray:
    xb, single = _as_batch(x)
    geom = _kernel_geometry(xb, kernels, padding)
    if bias.shape != (geom.out_channels,):
        raise ConfigurationError(f"bias shape {bias.shape} != ({geom.out_channels},)")
    check_finite(xb, "conv2d input")
    b, h, w, _ = xb.shape
    oh, ow = geom.output_extent(h), geom.output_extent(w)
    wmat = kernels.reshape(-1, geom.out_channels)
    out = np.empty((b, oh, ow, geom.out_channels), dtype=np.result_type(xb, kernels))
    for sl in _chunks(b, oh * ow * wmat.shape[0]):
        cols = im2col(xb[sl], geom.kernel, padding)
        with np.errstate(over="ignore", invalid="ignore"):
            out[sl] = (cols @ wmat + bias).reshape(-1, oh, ow, geom.out_channels)
    check_finite(out, "conv2d output")
    return out[0] if single else out


def conv2d_backward(x: np.ndarray, kernels: np.ndarray, upstream: np.ndarray, padding: int = 0):
    """Return ``(grad_input, grad_kernels, grad_bias)`` for :func:`conv2d_forward`."""
    xb, single = _as_batch(x)
    gb, _ = _as_batch(upstream, "upstream gradient")
    geom = _kernel_geometry(xb, kernels, padding)
    b, h, w, _ = xb.shape
    expected = (b, geom.output_extent(h), geom.output_extent(w), geom.out_channels)
    if gb.shape != expected:
        raise ConfigurationError(f"upstream gradient shape {gb.shape} != forward output {expected}")
    check_finite(gb, "conv2d upstream gradient")
    wmat = kernels.reshape(-1, geom.out_channels)
    grad_w = np.zeros_like(wmat, dtype=np.result_type(xb, gb))
    grad_x = np.empty(xb.shape, dtype=np.result_type(xb, gb, kernels))
    for sl in _chunks(b, expected[1] * expected[2] * wmat.shape[0]):
        cols = im2col(xb[sl], geom.kernel, padding)
        g = gb[sl].reshape(-1, geom.out_channels)
        grad_w += cols.T @ g
        grad_x[sl] = col2im(g @ wmat.T, xb[sl].shape, geom.kernel, padding)
    grad_b = gb.sum(axis=(0, 1, 2))
    return (grad_x[0] if single else grad_x), grad_w.reshape(kernels.shape), grad_b


def maxpool2d_forward(x: np.ndarray):
    """2x2 stride-2 max pooling with floor semantics.

    Returns ``(output, argmax_map)`` where ``argmax_map`` has the output's shape and
    holds, for each window, the flat index into ``x`` of the selected element.
    Ties go to the first element in row-major scan order.
    """
    xb, single = _as_batch(x)
    b, h, w, c = xb.shape
    if h < POOL or w < POOL:
        raise ConfigurationError(f"input {h}x{w} smaller than the {POOL}x{POOL} pooling window")
    check_finite(xb, "maxpool input")
    oh, ow = h // POOL, w // POOL
    win = (
        xb[:, :oh * POOL, :ow * POOL, :]
        .reshape(b, oh, POOL, ow, POOL, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, oh, ow, c, POOL * POOL)
    )
    pos = win.argmax(axis=-1)
    out = np.take_along_axis(win, pos[..., None], axis=-1)[..., 0]
    bi, ii, jj, ci = np.indices((b, oh, ow, c), sparse=True)
    rows = ii * POOL + pos // POOL
    cols = jj * POOL + pos % POOL
    flat = ((bi * h + rows) * w + cols) * c + ci
    if single:
        return out[0], flat[0]
    return out, flat


def maxpool2d_backward(argmax_map: np.ndarray, upstream: np.ndarray, input_shape: tuple) -> np.ndarray:
    input_shape = tuple(input_shape)
    if argmax_map.shape != upstream.shape:
        raise ConfigurationError(
            f"argmax map shape {argmax_map.shape} != upstream gradient shape {upstream.shape}"
        )
    expected = input_shape[:-3] + (input_shape[-3] // POOL, input_shape[-2] // POOL, input_shape[-1])
    if upstream.shape != expected:
        raise ConfigurationError(
            f"upstream gradient shape {upstream.shape} does not match input shape {input_shape}"
        )
    check_finite(upstream, "maxpool upstream gradient")
    grad = np.zeros(int(np.prod(input_shape)), dtype=upstream.dtype)
    # argmax positions are unique per window, so plain assignment suffices
    grad[argmax_map.ravel()] = upstream.ravel()
    return grad.reshape(input_shape)
