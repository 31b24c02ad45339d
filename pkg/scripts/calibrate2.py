"""Calibration sweep 2: single-image convergence tactics."""
import json, time
import numpy as np
from ncam.datasets import gen_glyphs
from ncam.training import TrainConfig, train

out = open("/root/pkg/scripts/cal2.log", "a", buffering=1)
one = gen_glyphs(1, 32, "lines", seed=3)
BASE = dict(mode="continuous", update="synchronous", total_steps=1200,
            enc_width=8, enc_fcb_expansion=1, seed=0, ckpt_every=0)

def run(tag, **kw):
    t0 = time.time()
    curve = []
    res = train(one, TrainConfig(**BASE, **kw),
                on_step=lambda s, l: curve.append((s, l)) if s % 100 == 0 else None)
    lfs = [m[2] for m in res.metrics]
    out.write(json.dumps(dict(tag=tag, final=res.metrics[-1][1],
                              curve=[(s, round(l, 5)) for s, l in curve],
                              lf_first100=round(lfs[99], 4), lf_last=round(lfs[-1], 4),
                              secs=round(time.time() - t0))) + "\n")

run("lr2e-3-cos", lr=2e-3, lr_decay="cosine")
run("lr4e-3-cos", lr=4e-3, lr_decay="cosine")
run("lr4e-3-const", lr=4e-3)
run("lr2e-3-cos-noclip", lr=2e-3, lr_decay="cosine", grad_clip=0.0)
out.write("DONE2\n")
