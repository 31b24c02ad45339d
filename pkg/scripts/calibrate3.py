"""Calibration sweep 3 (post init-fix): single-image + mini orderings."""
import json
import time

import numpy as np

from ncam.datasets import gen_glyphs
from ncam.training import TrainConfig, evaluate, train

out = open("/root/pkg/scripts/cal3.log", "a", buffering=1)


def run(tag, ds, curve_every=200, **kw):
    t0 = time.time()
    curve = []
    res = train(ds, TrainConfig(**kw),
                on_step=lambda s, l: curve.append((s, round(l, 5)))
                if s % curve_every == 0 else None)
    out.write(json.dumps(dict(
        tag=tag, steps=res.metrics[-1][0], final=round(res.metrics[-1][1], 6),
        eval=round(res.final_eval.mean, 6), lf=round(res.metrics[-1][2], 4),
        curve=curve, secs=round(time.time() - t0))) + "\n")
    return res


one = gen_glyphs(1, 32, "lines", seed=3)
SINGLE = dict(mode="continuous", update="synchronous", total_steps=2000,
              enc_width=8, enc_fcb_expansion=1, seed=0, ckpt_every=0,
              stop_at_loss=0.004)
run("single-lr2e-3-cos", one, lr=2e-3, lr_decay="cosine", **SINGLE)

mini = gen_glyphs(8, 12, "round", seed=11)
MINI = dict(mode="continuous", total_steps=500, lr=1e-3, encoding_dim=32,
            steps=24, enc_width=16, pred_width=64, ckpt_every=0)
for seed in (0, 1, 2):
    for tag, kw in [("full", {}), ("noLF", dict(use_lf=False)),
                    ("noNorm", dict(use_norm=False)),
                    ("noSlices", dict(use_slices=False))]:
        run(f"abl-{tag}-s{seed}", mini, update="synchronous", seed=seed,
            curve_every=250, **MINI, **kw)
for seed in (0, 1, 2):
    for update in ("synchronous", "stochastic"):
        run(f"order-{update}-s{seed}", mini, update=update, seed=seed,
            curve_every=250, **MINI)
out.write("DONE3\n")
