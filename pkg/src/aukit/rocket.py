"""Random convolutional kernel features (ROCKET-style) for time series.

A fixed bank of random dilated kernels is sampled once; applying it to a
series yields two features per kernel: the proportion of positive convolution
outputs (PPV) and the maximum output. Multichannel inputs are concatenations
of equal-length channels, and each kernel slides within exactly one channel
segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputTooShort, LengthMismatch

KERNEL_LENGTHS = (7, 9, 11)


@dataclass(eq=False)
class Kernel:
    weights: np.ndarray  # mean-centered
    bias: float
    dilation: int
    padding: bool
    channel: int = 0

    def pad_width(self) -> int:
        if not self.padding:
            return 0
        return ((len(self.weights) - 1) * self.dilation) // 2


@dataclass(eq=False)
class RocketTransform:
    kernels: list[Kernel]
    num_kernels: int
    input_length: int  # per channel
    num_channels: int
    seed: int


def rocket_init(
    num_kernels: int,
    input_length: int,
    seed: int = 0,
    num_channels: int = 1,
) -> RocketTransform:
    """Sample a deterministic kernel bank.

    Lengths are uniform over {7, 9, 11}; weights are standard normal draws,
    mean-centered; bias is uniform on [-1, 1]; dilation is floor(2**x) with x
    uniform on [0, log2((L-1)/(len-1))]; padding is on with probability 1/2.
    """
    if num_kernels < 1:
        raise ValueError("num_kernels must be >= 1")
    if input_length < min(KERNEL_LENGTHS):
        raise InputTooShort(
            f"input_length {input_length} < smallest kernel length "
            f"{min(KERNEL_LENGTHS)}"
        )
    if num_channels < 1:
        raise ValueError("num_channels must be >= 1")

    rng = np.random.default_rng(seed)
    lengths = rng.choice(np.array(KERNEL_LENGTHS), size=num_kernels)
    kernels = []
    for length in lengths:
        length = int(length)
        w = rng.normal(0.0, 1.0, length)
        w -= w.mean()
        bias = float(rng.uniform(-1.0, 1.0))
        max_exp = math.log2((input_length - 1) / (length - 1))
        dilation = int(2 ** rng.uniform(0.0, max_exp))
        padding = bool(rng.integers(2))
        channel = int(rng.integers(num_channels))
        kernels.append(
            Kernel(weights=w, bias=bias, dilation=dilation, padding=padding,
                   channel=channel)
        )
    return RocketTransform(
        kernels=kernels,
        num_kernels=num_kernels,
        input_length=input_length,
        num_channels=num_channels,
        seed=seed,
    )


def rocket_apply(transform: RocketTransform, series_set) -> np.ndarray:
    """Feature matrix (samples x 2 * num_kernels): per kernel [PPV, max].

    Each input series must have length num_channels * input_length. Kernels
    sharing (channel, length, dilation, padding) are batched into one matrix
    product over the corresponding sliding windows.
    """
    X = np.asarray(series_set, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    L = transform.input_length
    expected = transform.num_channels * L
    if X.ndim != 2 or X.shape[1] != expected:
        raise LengthMismatch(
            f"series length {X.shape[-1] if X.ndim else 0} != "
            f"channels*input_length = {expected}"
        )

    n = X.shape[0]
    features = np.empty((n, 2 * len(transform.kernels)))

    groups: dict[tuple[int, int, int, bool], list[int]] = {}
    for idx, kern in enumerate(transform.kernels):
        key = (kern.channel, len(kern.weights), kern.dilation, kern.padding)
        groups.setdefault(key, []).append(idx)

    for (channel, length, dilation, padded), idxs in groups.items():
        pad = ((length - 1) * dilation) // 2 if padded else 0
        out_len = L + 2 * pad - (length - 1) * dilation
        segment = X[:, channel * L : (channel + 1) * L]
        if pad > 0:
            segment = np.pad(segment, ((0, 0), (pad, pad)))
        taps = np.arange(out_len)[:, None] + np.arange(length)[None, :] * dilation
        windows = segment[:, taps]  # (n, out_len, length)

        W = np.stack([transform.kernels[i].weights for i in idxs])
        biases = np.array([transform.kernels[i].bias for i in idxs])
        out = np.einsum("nol,gl->nog", windows, W) + biases

        cols = np.array(idxs)
        features[:, 2 * cols] = (out > 0).mean(axis=1)
        features[:, 2 * cols + 1] = out.max(axis=1)

    return features
