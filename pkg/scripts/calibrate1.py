"""Calibration sweep 1: single-image lr, SYN/STO ordering, ablation ordering."""
import json, time
import numpy as np
from ncam.datasets import gen_glyphs
from ncam.training import TrainConfig, train, evaluate

out = open("/root/pkg/scripts/cal1.log", "a", buffering=1)

def run(tag, ds, **kw):
    t0 = time.time()
    cfg = TrainConfig(**kw)
    res = train(ds, cfg)
    msg = dict(tag=tag, steps=res.metrics[-1][0], loss=res.metrics[-1][1],
               eval=res.final_eval.mean, lf=res.metrics[-1][2], secs=round(time.time()-t0))
    out.write(json.dumps(msg) + "\n")
    return res

# -- single image 32x32, lr sweep ------------------------------------------
one = gen_glyphs(1, 32, "lines", seed=3)
for lr in (2e-3, 1e-3):
    run(f"single-lr{lr}", one, mode="continuous", update="synchronous",
        total_steps=2000, lr=lr, enc_width=8, enc_fcb_expansion=1,
        stop_at_loss=0.004, seed=0, ckpt_every=0)

# -- SYN vs STO ordering, 3 seeds -----------------------------------------
mini = gen_glyphs(8, 12, "round", seed=11)
MINI = dict(mode="continuous", total_steps=500, lr=1e-3, encoding_dim=32,
            steps=24, enc_width=16, pred_width=64, ckpt_every=0)
for seed in (0, 1, 2):
    for update in ("synchronous", "stochastic"):
        r = run(f"order-{update}-s{seed}", mini, update=update, seed=seed, **MINI)
        if update == "stochastic":
            rep = evaluate(r.model, mini, n_seeds=3)
            out.write(json.dumps(dict(tag=f"order-{update}-s{seed}-eval", mean=rep.mean, sd=rep.sd)) + "\n")

# -- ablations, 3 seeds -----------------------------------------------------
for seed in (0, 1, 2):
    for tag, kw in [("full", {}), ("noLF", dict(use_lf=False)),
                    ("noNorm", dict(use_norm=False)), ("noSlices", dict(use_slices=False))]:
        run(f"abl-{tag}-s{seed}", mini, update="synchronous", seed=seed, **MINI, **kw)

out.write("DONE\n")
