"""The cellular automaton: grid state, fixed perception, dynamic update rule.

A cell grid holds visible color channels followed by hidden "morphogene"
channels.  Each step every cell perceives its 3x3 neighborhood through
fixed identity/Sobel kernels (instance-normalized), computes an update
through two 1x1 convolutions whose weights are *predicted* per image, and
adds the update scaled by a trainable leak factor.  With update
probability p < 1 each cell fires independently per step (the Bernoulli
mask is constant under differentiation); p = 1 is the synchronous mode.

There is no alive masking: every cell follows the same rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

SOBEL_X = ad.SOBEL_X_KERNEL
SOBEL_Y = ad.SOBEL_Y_KERNEL

LF_MIN = 1e-3
LF_MAX = 1e3

PERCEPTION_KERNELS = 3  # identity, Sobel-x, Sobel-y


def clamp_leak_factor(lf: Tensor) -> None:
    """Hard projection of a leak-factor scalar onto [LF_MIN, LF_MAX]."""
    lf.data = np.clip(lf.data, LF_MIN, LF_MAX)


@dataclass
class NcaConfig:
    """Static shape/behavior of one automaton plus its trainable leak factor."""

    channels: int = 16
    visible: int = 4
    hidden: int = 32
    update_prob: float = 1.0
    steps: int = 32
    lf_init: float = 0.1
    use_lf: bool = True          # ablation: False freezes the leak factor at 1.0
    normalize_perception: bool = True  # ablation: False drops the instance norm
    leak_factor: Tensor = field(init=False, repr=False)

    def __post_init__(self):
        if self.channels not in (16, 32):
            raise ValueError(f"channels must be 16 or 32, got {self.channels}")
        if self.visible not in (3, 4):
            raise ValueError(f"visible channels must be 3 (RGB) or 4 (RGBA), got {self.visible}")
        if self.hidden < 1:
            raise ValueError("hidden width must be positive")
        if not 0.0 < self.update_prob <= 1.0:
            raise ValueError(f"update_prob must be in (0, 1], got {self.update_prob}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.use_lf:
            if not LF_MIN <= self.lf_init <= LF_MAX:
                raise ValueError(f"lf_init {self.lf_init} outside [{LF_MIN}, {LF_MAX}]")
            self.leak_factor = Tensor(np.float32(self.lf_init), requires_grad=True)
        else:
            self.leak_factor = Tensor(np.float32(1.0))

    @property
    def perception_channels(self) -> int:
        return PERCEPTION_KERNELS * self.channels


@dataclass
class NcaParams:
    """Predicted weights of the two 1x1 update convolutions.

    Shapes (unbatched): w1 (hidden, 3*channels, 1, 1), b1 (hidden,),
    w2 (channels, hidden, 1, 1), b2 (channels,).  A leading batch axis on
    all four marks per-sample parameter sets.
    """

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @property
    def batched(self) -> bool:
        return self.w1.ndim == 5

    def scalar_count(self) -> int:
        per = 1
        n = sum(t.size for t in (self.w1, self.b1, self.w2, self.b2))
        if self.batched:
            per = self.w1.shape[0]
        return n // per

    def validate_against(self, cfg: NcaConfig) -> None:
        pch, hid, ch = cfg.perception_channels, cfg.hidden, cfg.channels
        core = self.w1.shape[-4:], self.b1.shape[-1:], self.w2.shape[-4:], self.b2.shape[-1:]
        want = (hid, pch, 1, 1), (hid,), (ch, hid, 1, 1), (ch,)
        if core != want:
            raise ValueError(f"NcaParams shapes {core} do not match config {want}")


def param_count(channels: int, hidden: int) -> int:
    """Flat scalar count of one predicted parameter set."""
    pch = PERCEPTION_KERNELS * channels
    return pch * hidden + hidden + hidden * channels + channels


@dataclass
class CellGrid:
    """Automaton state: (channels, H, W) tensor plus a step counter."""

    state: Tensor
    step_index: int = 0

    @property
    def shape(self):
        return self.state.shape

    def visible(self, cfg: NcaConfig) -> np.ndarray:
        return np.array(self.state.data[: cfg.visible])


def seed_grid(h: int, w: int, cfg: NcaConfig) -> CellGrid:
    """All-zero grid except one activated center cell.

    The center cell's alpha channel (when visible is RGBA) and all hidden
    channels are set to 1.0; color channels stay 0.
    """
    if h < 3 or w < 3:
        raise ValueError(f"grid must be at least 3x3, got {h}x{w}")
    state = _seed_array(h, w, cfg)
    return CellGrid(state=Tensor(state), step_index=0)


def _seed_array(h: int, w: int, cfg: NcaConfig) -> np.ndarray:
    state = np.zeros((cfg.channels, h, w), dtype=ad.DEFAULT_DTYPE)
    cy, cx = h // 2, w // 2
    if cfg.visible == 4:
        state[3, cy, cx] = 1.0
    state[cfg.visible:, cy, cx] = 1.0
    return state


def perceive(grid: CellGrid, cfg: NcaConfig) -> Tensor:
    """Fixed perception: per channel identity + Sobel-x + Sobel-y, normalized."""
    return _perceive(grid.state, cfg)


def _perceive(state: Tensor, cfg: NcaConfig) -> Tensor:
    out = ad.sobel_perception(state)
    if cfg.normalize_perception:
        out = ad.instance_norm(out, epsilon=1e-5)
    return out


def _sample_mask(rng, cfg: NcaConfig, lead_shape, h: int, w: int):
    """Per-cell Bernoulli(p) mask, shared across channels, constant in backward."""
    draw = rng.random(size=lead_shape + (1, h, w))
    return Tensor((draw < cfg.update_prob).astype(ad.DEFAULT_DTYPE))


def _as_rng(rng_seed):
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def step(grid: CellGrid, params: NcaParams, cfg: NcaConfig, rng_seed=None) -> CellGrid:
    """One update: state + leak_factor * mask * update(perceive(state))."""
    params.validate_against(cfg)
    if params.batched:
        raise ValueError("step() takes unbatched params; use grow_batch for batches")
    if grid.state.shape[0] != cfg.channels:
        raise ValueError(f"grid channels {grid.state.shape[0]} != config {cfg.channels}")
    _, h, w = grid.state.shape

    percept = _perceive(grid.state, cfg)
    hid = ad.relu(ad.conv2d(percept, params.w1, params.b1))
    delta = ad.conv2d(hid, params.w2, params.b2)
    if cfg.update_prob < 1.0:
        if rng_seed is None:
            raise ValueError("stochastic update (p < 1) requires rng_seed")
        delta = ad.mul(_sample_mask(_as_rng(rng_seed), cfg, (), h, w), delta)
    new_state = ad.add(grid.state, ad.mul(cfg.leak_factor, delta))
    return CellGrid(state=new_state, step_index=grid.step_index + 1)


def grow(params: NcaParams, cfg: NcaConfig, h: int, w: int, rng_seed=None,
         frames_every: int | None = None):
    """Run the automaton cfg.steps times from a fresh seed.

    Returns (final CellGrid, frames) where frames is a list of visible-channel
    arrays captured after every `frames_every`-th step (final step always
    included), or None when capture is off.
    """
    if frames_every is not None and frames_every < 1:
        raise ValueError("frames_every must be >= 1")
    rng = _as_rng(rng_seed) if cfg.update_prob < 1.0 else None
    grid = seed_grid(h, w, cfg)
    frames = [] if frames_every else None
    for t in range(1, cfg.steps + 1):
        grid = step(grid, params, cfg, rng)
        if frames_every and (t % frames_every == 0 or t == cfg.steps):
            frames.append(grid.visible(cfg))
    return grid, frames


# -- batched path (training/evaluation) --------------------------------------


def seed_state_batch(batch: int, h: int, w: int, cfg: NcaConfig) -> Tensor:
    if h < 3 or w < 3:
        raise ValueError(f"grid must be at least 3x3, got {h}x{w}")
    one = _seed_array(h, w, cfg)
    return Tensor(np.broadcast_to(one, (batch,) + one.shape).copy())


def _flat_params(params: NcaParams, cfg: NcaConfig, b: int):
    """Reshape batched params once for the matmul form of the 1x1 convs."""
    return (ad.reshape(params.w1, (b, cfg.hidden, cfg.perception_channels)),
            ad.reshape(params.b1, (b, cfg.hidden, 1)),
            ad.reshape(params.w2, (b, cfg.channels, cfg.hidden)),
            ad.reshape(params.b2, (b, cfg.channels, 1)))


def _step_flat(state: Tensor, flat_params, cfg: NcaConfig, rng):
    b, _, h, w = state.shape
    w1, b1, w2, b2 = flat_params
    percept = _perceive(state, cfg)
    flat = ad.reshape(percept, (b, cfg.perception_channels, h * w))
    hid = ad.relu(ad.add(ad.bmm(w1, flat), b1))
    delta = ad.reshape(ad.add(ad.bmm(w2, hid), b2), (b, cfg.channels, h, w))
    if cfg.update_prob < 1.0:
        if rng is None:
            raise ValueError("stochastic update (p < 1) requires an rng")
        delta = ad.mul(_sample_mask(rng, cfg, (b,), h, w), delta)
    return ad.add(state, ad.mul(cfg.leak_factor, delta))


def step_batch(state: Tensor, params: NcaParams, cfg: NcaConfig, rng=None) -> Tensor:
    """One update over (B, channels, H, W) with per-sample parameter sets."""
    params.validate_against(cfg)
    if not params.batched:
        raise ValueError("step_batch() needs batched params (leading batch axis)")
    b = state.shape[0]
    if params.w1.shape[0] != b:
        raise ValueError(f"params batch {params.w1.shape[0]} != state batch {b}")
    return _step_flat(state, _flat_params(params, cfg, b), cfg, rng)


def grow_batch(params: NcaParams, cfg: NcaConfig, h: int, w: int, rng_seed=None,
               frames_every: int | None = None):
    """Batched grow; returns (final state Tensor (B, C, H, W), frames or None)."""
    if not params.batched:
        raise ValueError("grow_batch() needs batched params")
    params.validate_against(cfg)
    b = params.w1.shape[0]
    rng = _as_rng(rng_seed) if cfg.update_prob < 1.0 else None
    state = seed_state_batch(b, h, w, cfg)
    flat = _flat_params(params, cfg, b)
    frames = [] if frames_every else None
    for t in range(1, cfg.steps + 1):
        state = _step_flat(state, flat, cfg, rng)
        if frames_every and (t % frames_every == 0 or t == cfg.steps):
            frames.append(np.array(state.data[:, : cfg.visible]))
    return state, frames
