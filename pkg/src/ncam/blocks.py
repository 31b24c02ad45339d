"""Residual building blocks: CB3, CB1 and FCB.

Every block maps its input to an output of identical shape:
``out = x + lf * contract(relu(expand(x)))`` where expand/contract are
3x3 convolutions (CB3, x2 feature expansion), 1x1 convolutions (CB1, x4)
or dense layers (FCB, configurable expansion).  ``lf`` is the block's own
trainable leak factor, clamped to [1e-3, 1e3] by the optimizer loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

_EXPANSION = {"CB1": 4, "CB3": 2, "FCB": 2}


@dataclass
class BlockSpec:
    kind: str            # "CB1" | "CB3" | "FCB"
    width: int           # channels (CBn) or features (FCB)
    expansion: int | None = None  # FCB only; CB1/CB3 are fixed at 4/2

    def __post_init__(self):
        if self.kind not in _EXPANSION:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.kind == "FCB":
            if self.expansion is None:
                self.expansion = _EXPANSION["FCB"]
        elif self.expansion is None:
            self.expansion = _EXPANSION[self.kind]
        elif self.expansion != _EXPANSION[self.kind]:
            raise ValueError(f"{self.kind} expansion is fixed at {_EXPANSION[self.kind]}")
        if self.width < 1 or self.expansion < 1:
            raise ValueError("width and expansion must be positive")


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(ad.DEFAULT_DTYPE)


class Dense:
    """Affine layer; ``zero_init`` makes it emit exactly zero at start."""

    def __init__(self, rng, in_dim: int, out_dim: int, zero_init: bool = False):
        if zero_init:
            w = np.zeros((out_dim, in_dim), dtype=ad.DEFAULT_DTYPE)
        else:
            w = he_normal(rng, (out_dim, in_dim), in_dim)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(out_dim, dtype=ad.DEFAULT_DTYPE), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.dense(x, self.w, self.b)

    def named_params(self):
        return {"w": self.w, "b": self.b}


class Conv:
    """Same-padded KxK convolution layer with bias."""

    def __init__(self, rng, in_ch: int, out_ch: int, k: int):
        self.kernels = Tensor(he_normal(rng, (out_ch, in_ch, k, k), in_ch * k * k),
                              requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=ad.DEFAULT_DTYPE), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.kernels, self.bias)

    def named_params(self):
        return {"k": self.kernels, "b": self.bias}


class ResidualBlock:
    """One CB1/CB3/FCB block; see module docstring for the update rule."""

    def __init__(self, spec: BlockSpec, rng, lf_init: float = 0.1, use_lf: bool = True):
        self.spec = spec
        inner = spec.width * spec.expansion
        if spec.kind == "FCB":
            self.expand = Dense(rng, spec.width, inner)
            self.contract = Dense(rng, inner, spec.width)
        else:
            k = 1 if spec.kind == "CB1" else 3
            self.expand = Conv(rng, spec.width, inner, k)
            self.contract = Conv(rng, inner, spec.width, k)
        if use_lf:
            self.lf = Tensor(np.float32(lf_init), requires_grad=True)
        else:
            self.lf = Tensor(np.float32(1.0))

    def __call__(self, x: Tensor) -> Tensor:
        width_axis = -1 if self.spec.kind == "FCB" else -3
        if x.shape[width_axis] != self.spec.width:
            raise ValueError(
                f"{self.spec.kind} block of width {self.spec.width} got input {x.shape}")
        return ad.add(x, ad.mul(self.lf, self.contract(ad.relu(self.expand(x)))))

    def named_params(self):
        out = {}
        for part, layer in (("expand", self.expand), ("contract", self.contract)):
            for k, v in layer.named_params().items():
                out[f"{part}.{k}"] = v
        if self.lf.requires_grad:
            out["lf"] = self.lf
        return out

    def leak_factors(self):
        return [self.lf] if self.lf.requires_grad else []


def collect_named(prefix: str, parts) -> dict:
    """Flatten {name: layer_or_block} into dotted parameter names."""
    out = {}
    for name, part in parts:
        for k, v in part.named_params().items():
            out[f"{prefix}{name}.{k}"] = v
    return out
