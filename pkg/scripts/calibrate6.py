"""Calibration 6: CE/DNA parity at matched budget, with periodic clean evals."""
import json, time
import numpy as np
from ncam import autodiff as ad
from ncam.autodiff import Tensor
from ncam.datasets import gen_glyphs
from ncam.model import NcamModel
from ncam.training import Adam, model_config_for, TrainConfig, evaluate
from ncam.nca import grow_batch, clamp_leak_factor

out = open("/root/pkg/scripts/cal6.log", "a", buffering=1)
ds = gen_glyphs(16, 16, "lines", seed=7)

def manual_train(tag, mode, total, mutation=0.0, lr=1.5e-3):
    cfg = TrainConfig(mode=mode, mutation_rate=mutation, encoding_dim=64,
                      nca_hidden=32, steps=32, enc_width=16, pred_width=128,
                      seed=0, lr=lr, lr_decay="cosine", total_steps=total)
    model = NcamModel(model_config_for(ds, cfg))
    opt = Adam(model.named_params(), lr=cfg.lr)
    batch_rng, mask_rng, mut_rng = [np.random.default_rng(s) for s in
                                    np.random.SeedSequence(cfg.seed).spawn(3)]
    t0 = time.time()
    evals = []
    for step in range(1, total + 1):
        frac = (step - 1) / max(total - 1, 1)
        opt.lr = cfg.lr * (0.02 + 0.98 * 0.5 * (1 + np.cos(np.pi * frac)))
        idx = batch_rng.choice(16, 8, replace=False)
        targets = ds.images[idx]
        e = model.encode(targets)
        if model.codec is not None:
            dna = model.codec.encode(e)
            from ncam.dna import mutate
            if mutation > 0:
                dna = mutate(dna, mutation, mut_rng)
            e = model.codec.decode(dna)
        params = model.predictor.predict(e)
        state, _ = grow_batch(params, model.nca_cfg, 16, 16)
        loss = ad.mse(model.visible_of(state), Tensor(targets))
        loss.backward()
        opt.step(); opt.zero_grad()
        for lf in model.leak_factors():
            clamp_leak_factor(lf)
        if step % 500 == 0:
            clean = evaluate(model, ds).mean
            evals.append((step, round(clean, 7)))
    rec = dict(tag=tag, evals=evals, secs=round(time.time() - t0))
    if model.codec is not None:
        rec["mutated"] = round(evaluate(model, ds, mutation_rate=0.5, n_seeds=5).mean, 7)
        rec["discrete"] = round(evaluate(model, ds, discretize_codes=True).mean, 7)
    out.write(json.dumps(rec) + "\n")

manual_train("ce-3000", "continuous", 3000)
manual_train("dna-3000-mut0.5", "dna", 3000, mutation=0.5)
out.write("DONE6\n")
