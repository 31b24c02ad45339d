"""Shared test oracles: central finite differences, independent of backward().

The numeric gradient runs the forward function twice per probed coordinate
with the input perturbed in place, never touching the autodiff graph, so
an engine bug cannot hide in its own verification.
"""

import numpy as np

from ncam import autodiff as ad
from ncam.autodiff import Tensor


def numeric_grad(forward, arrays, which, h=1e-4, max_coords=None, rng=None):
    """Central-difference gradient of forward(arrays) w.r.t. arrays[which].

    forward: callable taking the list of ndarrays, returning a float.
    Returns (grad_estimates, flat_coords) for the probed coordinates.
    """
    a = arrays[which]
    flat = a.reshape(-1)
    coords = np.arange(flat.size)
    if max_coords is not None and flat.size > max_coords:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(flat.size, size=max_coords, replace=False)
    est = np.empty(len(coords), dtype=np.float64)
    for j, c in enumerate(coords):
        orig = flat[c]
        flat[c] = orig + h
        fp = forward(arrays)
        flat[c] = orig - h
        fm = forward(arrays)
        flat[c] = orig
        est[j] = (fp - fm) / (2.0 * h)
    return est, coords


def rel_error(analytic, numeric):
    """Max-norm relative error between two gradient estimates."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return np.abs(analytic - numeric).max(initial=0.0) / scale


def check_gradients(build, arrays, h=1e-4, tol=1e-5, max_coords=None, rng=None,
                    check_inputs=None):
    """Assert analytic gradients of a scalar-valued graph match finite differences.

    build: callable(list of Tensors) -> scalar Tensor; called fresh per
    evaluation.  arrays: list of float64 ndarrays (mutated in place while
    probing, restored afterwards).
    """
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build(tensors)
    loss.backward()

    def forward(arrs):
        with ad.no_grad():
            return float(build([Tensor(a) for a in arrs]).data)

    errs = []
    for i in check_inputs if check_inputs is not None else range(len(arrays)):
        assert tensors[i].grad is not None, f"input {i} received no gradient"
        num, coords = numeric_grad(forward, arrays, i, h=h, max_coords=max_coords, rng=rng)
        ana = tensors[i].grad.reshape(-1)[coords]
        err = rel_error(ana, num)
        errs.append(err)
        assert err <= tol, f"gradient mismatch on input {i}: rel err {err:.3e} > {tol}"
    return errs


def scalar_probe(out, probe_array):
    """Reduce a tensor to a scalar through a fixed random linear functional."""
    return ad.mean_over_axes(ad.mul(out, Tensor(probe_array)), tuple(range(out.ndim)))


def _stable_compare(forward, arrays, analytic_flat, h, max_coords, rng):
    """Compare analytic vs numeric on coordinates where finite differences are
    a valid oracle: estimates at steps h and h/2 must agree (a disagreement
    marks a ReLU kink crossing, where the central difference is meaningless).

    Returns (max rel error over smooth coords or nan if none, n_smooth, n_total).
    """
    est_h, coords = numeric_grad(forward, arrays, 0, h=h, max_coords=max_coords, rng=rng)
    est_h2 = np.empty_like(est_h)
    flat = arrays[0].reshape(-1)
    for j, c in enumerate(coords):
        orig = flat[c]
        flat[c] = orig + h / 2
        fp = forward(arrays)
        flat[c] = orig - h / 2
        fm = forward(arrays)
        flat[c] = orig
        est_h2[j] = (fp - fm) / h
    scale = max(np.abs(est_h2).max(initial=0.0), 1.0)
    smooth = np.abs(est_h - est_h2) <= 1e-6 * scale
    if not smooth.any():
        return float("nan"), 0, len(coords)
    err = rel_error(analytic_flat[coords][smooth], est_h2[smooth])
    return err, int(smooth.sum()), len(coords)


def check_module_gradients(named_params, forward_fn, x, h=1e-4, tol=1e-4,
                           max_coords=64, rng=None, allow_abstain=False):
    """Gradcheck a module's live parameters plus its input, in float64.

    named_params: {name: Tensor} module leaves (restored on exit).
    forward_fn: callable(Tensor) -> scalar Tensor, closing over the module.
    x: input ndarray (cast to float64).

    Coordinates where the two-step-size probe detects a ReLU kink are
    excluded.  A tensor whose probed coordinates are all kink-contaminated
    fails, unless allow_abstain=True, in which case its entry is nan and the
    caller is responsible for demanding coverage across repetitions.
    """
    names = sorted(named_params)
    params = [named_params[n] for n in names]
    saved = [p.data for p in params]
    x = np.asarray(x, dtype=np.float64)
    for p in params:
        p.data = p.data.astype(np.float64)
        p.grad = None
    try:
        xt = Tensor(x.copy(), requires_grad=True)
        loss = forward_fn(xt)
        loss.backward()
        analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                    for n, p in zip(names, params)}
        ax = xt.grad
        assert ax is not None, "input received no gradient"

        def forward_x(arrs):
            with ad.no_grad():
                return float(forward_fn(Tensor(arrs[0])).data)

        def forward_p(_arrs):
            with ad.no_grad():
                return float(forward_fn(Tensor(x)).data)

        errs = {}
        probes = [("<input>", forward_x, [x], ax.reshape(-1))]
        probes += [(n, forward_p, [p.data], analytic[n].reshape(-1))
                   for n, p in zip(names, params)]
        for name, fwd, arrs, ana in probes:
            err, n_smooth, n_total = _stable_compare(fwd, arrs, ana, h, max_coords, rng)
            if n_smooth == 0:
                assert allow_abstain, \
                    f"{name}: all {n_total} probed coordinates sit on ReLU kinks"
                errs[name] = float("nan")
                continue
            assert err <= tol, f"gradient mismatch on {name}: {err:.3e} > {tol}"
            errs[name] = err
        return errs
    finally:
        for p, s in zip(params, saved):
            p.data = s
            p.grad = None
