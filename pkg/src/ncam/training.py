"""End-to-end optimization: batching, loss, Adam, BPTT, evaluation.

One training step: sample a batch, encode, (DNA-encode -> mutate ->
DNA-decode in dna mode), predict per-sample automaton parameters, grow for
the configured number of steps, take the MSE between the final visible
channels and the targets, back-propagate through the whole unroll, apply
Adam with global-norm gradient clipping, and project every leak factor
back onto its bounds.  A non-finite loss aborts with the last finite
checkpoint attached.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import Checkpoint, snapshot
from .datasets import Dataset
from .dna import discretize, mutate
from .model import ModelConfig, NcamModel
from .nca import clamp_leak_factor, grow_batch

MODES = ("continuous", "dna")
UPDATES = ("synchronous", "stochastic")


@dataclass
class TrainConfig:
    mode: str = "continuous"
    update: str = "synchronous"
    total_steps: int = 2000
    batch_size: int = 8
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0
    mutation_rate: float = 0.5
    mutation_warmup: int = 0      # steps to ramp the rate linearly from 0
    dna_logit_cap: float = 4.0
    encoding_dim: int = 64
    channels: int = 16
    nca_hidden: int = 32
    steps: int = 32
    lf_init: float = 0.1
    enc_width: int = 16
    enc_trunk: tuple = ("CB3", "CB1", "CB3", "CB1")
    enc_fcb_count: int = 2
    enc_fcb_expansion: int = 2
    pred_width: int = 128
    pred_fcb_count: int = 2
    pred_fcb_expansion: int = 2
    use_lf: bool = True
    use_norm: bool = True
    use_slices: bool = True
    seed: int = 0
    stop_at_loss: float | None = None
    ckpt_every: int = 500
    lr_decay: str = "none"        # or "cosine" (decays to 2% of lr by total_steps)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.update not in UPDATES:
            raise ValueError(f"update must be one of {UPDATES}")
        if self.lr_decay not in ("none", "cosine"):
            raise ValueError("lr_decay must be 'none' or 'cosine'")
        for name in ("total_steps", "batch_size", "lr", "steps", "encoding_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")

    @property
    def update_prob(self) -> float:
        return 1.0 if self.update == "synchronous" else 0.5

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["enc_trunk"] = list(self.enc_trunk)
        return d


def model_config_for(dataset: Dataset, cfg: TrainConfig) -> ModelConfig:
    return ModelConfig(
        mode=cfg.mode, visible=dataset.visible,
        height=dataset.height, width=dataset.width,
        encoding_dim=cfg.encoding_dim, channels=cfg.channels,
        nca_hidden=cfg.nca_hidden, update_prob=cfg.update_prob, steps=cfg.steps,
        lf_init=cfg.lf_init, enc_width=cfg.enc_width, enc_trunk=cfg.enc_trunk,
        enc_fcb_count=cfg.enc_fcb_count, enc_fcb_expansion=cfg.enc_fcb_expansion,
        pred_width=cfg.pred_width, pred_fcb_count=cfg.pred_fcb_count,
        pred_fcb_expansion=cfg.pred_fcb_expansion,
        dna_logit_cap=cfg.dna_logit_cap,
        use_lf=cfg.use_lf, use_norm=cfg.use_norm, use_slices=cfg.use_slices,
        init_seed=cfg.seed)


class Adam:
    """Adaptive moment estimation with global gradient-norm clipping."""

    def __init__(self, params: dict, lr=2e-4, beta1=0.9, beta2=0.999,
                 eps=1e-8, grad_clip=1.0):
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.grad_clip = grad_clip
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in self.params.items()}
        self._scratch = {k: np.empty_like(v.data) for k, v in self.params.items()}

    def step(self):
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        if not grads:
            return 0.0
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        if self.grad_clip and norm > self.grad_clip:
            scale = self.grad_clip / (norm + 1e-12)
            for g in grads.values():
                g *= scale  # grads are tensor-owned; rescaling in place is fine
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v, s = self.m[k], self.v[k], self._scratch[k]
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=s)
            m += s
            v *= self.beta2
            np.multiply(g, g, out=s)
            s *= 1.0 - self.beta2
            v += s
            np.divide(v, b2c, out=s)
            np.sqrt(s, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= self.lr / b1c
            self.params[k].data -= s
        return norm

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_tensors(self) -> dict:
        out = {"t": np.array([self.t], dtype=np.int64)}
        for k in self.params:
            out[f"m.{k}"] = np.array(self.m[k])
            out[f"v.{k}"] = np.array(self.v[k])
        return out

    def load_state(self, tensors: dict):
        self.t = int(tensors["t"][0])
        for k in self.params:
            self.m[k] = np.array(tensors[f"m.{k}"])
            self.v[k] = np.array(tensors[f"v.{k}"])


class DivergenceError(RuntimeError):
    """Loss became non-finite; carries the last finite checkpoint."""

    def __init__(self, message: str, checkpoint: Checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list                 # (step, loss, lf_nca, wallclock_ms)
    final_eval: "EvalReport"
    model: NcamModel


def _codes_to_params(model: NcamModel, e: Tensor, mutation_rate: float,
                     mutation_rng, discretize_codes: bool):
    if model.codec is None:
        return model.predictor.predict(e), None
    dna = model.codec.encode(e)
    if discretize_codes:
        dna = discretize(dna)
    if mutation_rate > 0.0:
        dna = mutate(dna, mutation_rate, mutation_rng)
    return model.predictor.predict(model.codec.decode(dna)), dna


def train(dataset: Dataset, cfg: TrainConfig, ckpt_path=None, log_path=None,
          on_step=None) -> TrainResult:
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    model = NcamModel(model_config_for(dataset, cfg))
    opt = Adam(model.named_params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
               eps=cfg.adam_eps, grad_clip=cfg.grad_clip)
    batch_rng, mask_rng, mut_rng = [np.random.default_rng(s) for s in
                                    np.random.SeedSequence(cfg.seed).spawn(3)]

    meta_base = {"train_config": cfg.to_dict(), "dataset": dataset.name}
    last_ok = snapshot(model, opt, {**meta_base, "train_step": 0})
    metrics = []
    log_file = open(log_path, "a") if log_path else None
    n = len(dataset)
    batch = min(cfg.batch_size, n)
    mut_rate = cfg.mutation_rate if cfg.mode == "dna" else 0.0

    try:
        for step_idx in range(1, cfg.total_steps + 1):
            t0 = time.perf_counter()
            if cfg.lr_decay == "cosine":
                frac = (step_idx - 1) / max(cfg.total_steps - 1, 1)
                opt.lr = cfg.lr * (0.02 + 0.98 * 0.5 * (1 + np.cos(np.pi * frac)))
            if n <= batch:
                idx = np.arange(n)
            else:
                idx = batch_rng.choice(n, size=batch, replace=False)
            targets = dataset.images[idx]
            rate = mut_rate
            if cfg.mutation_warmup > 0 and step_idx <= cfg.mutation_warmup:
                # bootstrap: codes must carry signal before the full mutation
                # pressure lands, or the predictor learns to ignore them
                rate = mut_rate * step_idx / cfg.mutation_warmup
            params, _ = _codes_to_params(model, model.encode(targets),
                                         rate, mut_rng, False)
            state, _ = grow_batch(params, model.nca_cfg, dataset.height,
                                  dataset.width, rng_seed=mask_rng)
            loss = ad.mse(model.visible_of(state), Tensor(targets))
            loss_val = loss.item()

            if not np.isfinite(loss_val):
                if ckpt_path:
                    last_ok.save(ckpt_path)
                raise DivergenceError(
                    f"loss became non-finite at step {step_idx}", last_ok)

            loss.backward()
            opt.step()
            opt.zero_grad()
            for lf in model.leak_factors():
                clamp_leak_factor(lf)

            ms = (time.perf_counter() - t0) * 1000.0
            lf_nca = model.nca_cfg.leak_factor.item()
            metrics.append((step_idx, loss_val, lf_nca, ms))
            if log_file:
                log_file.write(f"{step_idx},{loss_val:.8f},{lf_nca:.6f},{ms:.1f}\n")
            if on_step:
                on_step(step_idx, loss_val)
            if cfg.ckpt_every and step_idx % cfg.ckpt_every == 0:
                last_ok = snapshot(model, opt, {**meta_base, "train_step": step_idx,
                                                "rng_state": _rng_states(batch_rng, mask_rng, mut_rng)})
                if ckpt_path:
                    last_ok.save(ckpt_path)
            if cfg.stop_at_loss is not None and loss_val < cfg.stop_at_loss:
                break
    finally:
        if log_file:
            log_file.close()

    final_eval = evaluate(model, dataset, batch_size=batch)
    ckpt = snapshot(model, opt, {
        **meta_base, "train_step": metrics[-1][0] if metrics else 0,
        "final_train_loss": metrics[-1][1] if metrics else None,
        "final_eval_mse": final_eval.mean,
        "rng_state": _rng_states(batch_rng, mask_rng, mut_rng)})
    if ckpt_path:
        ckpt.save(ckpt_path)
    return TrainResult(checkpoint=ckpt, metrics=metrics, final_eval=final_eval,
                       model=model)


def _rng_states(*rngs):
    return [r.bit_generator.state for r in rngs]


# -- evaluation -------------------------------------------------------------------


@dataclass
class EvalReport:
    per_image: list                # (id, mean mse, sd over seeds)
    mean: float
    sd: float
    n_seeds: int

    def __str__(self):
        lines = [f"{i},{m:.6f},{s:.6f}" for i, m, s in self.per_image]
        lines.append(f"mean,{self.mean:.6f},{self.sd:.6f}")
        return "\n".join(lines)


def evaluate(model_or_ckpt, dataset: Dataset, n_seeds: int = 5, base_seed: int = 0,
             mutation_rate: float = 0.0, discretize_codes: bool = False,
             batch_size: int = 16) -> EvalReport:
    """Mean reconstruction MSE per image.

    Deterministic models (synchronous update, no mutation) are evaluated in
    one pass; otherwise the report averages `n_seeds` independent passes and
    carries the across-seed standard deviation.
    """
    model = model_or_ckpt
    if isinstance(model_or_ckpt, Checkpoint):
        model = model_or_ckpt.build_model()
    deterministic = model.nca_cfg.update_prob >= 1.0 and mutation_rate == 0.0
    seeds = [base_seed] if deterministic else [base_seed + s for s in range(n_seeds)]

    per_seed = np.empty((len(seeds), len(dataset)), dtype=np.float64)
    with ad.no_grad():
        for si, seed in enumerate(seeds):
            mask_rng, mut_rng = [np.random.default_rng(s) for s in
                                 np.random.SeedSequence(seed).spawn(2)]
            pos = 0
            while pos < len(dataset):
                chunk = dataset.images[pos:pos + batch_size]
                params, _ = _codes_to_params(model, model.encode(chunk),
                                             mutation_rate, mut_rng, discretize_codes)
                state, _ = grow_batch(params, model.nca_cfg, dataset.height,
                                      dataset.width, rng_seed=mask_rng)
                vis = state.data[:, :dataset.visible]
                err = ((vis - chunk) ** 2).mean(axis=(1, 2, 3))
                per_seed[si, pos:pos + len(chunk)] = err
                pos += len(chunk)

    per_image_mean = per_seed.mean(axis=0)
    per_image_sd = per_seed.std(axis=0)
    dataset_means = per_seed.mean(axis=1)
    return EvalReport(
        per_image=[(i, float(m), float(s)) for i, m, s in
                   zip(dataset.ids, per_image_mean, per_image_sd)],
        mean=float(dataset_means.mean()),
        sd=float(dataset_means.std()),
        n_seeds=len(seeds))
