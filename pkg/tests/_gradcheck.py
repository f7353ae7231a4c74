"""Central-difference gradient check of the full model loss."""

import numpy as np

from gcnse import model, synthgen

STEP = 1e-4


def small_instance(seed: int, dual: bool, n=20, t=4, c=3, f=5):
    rng = np.random.default_rng(seed)
    g = synthgen.generate(synthgen.GenParams(n, c, t, p_intra=0.3, p_inter=0.05, seed=seed))
    if dual:
        g = g.replace(attributes=tuple(rng.normal(size=(n, f)) for _ in range(t)))
    scheme = model.WeightingScheme("se-dual" if dual else "se")
    prepared = model.prepare(g)
    params = model.init_params(prepared, scheme, rng, num_attributes=f if dual else 0)
    # move off the init (zero W2, |W1|) so every path carries gradient
    arrays = {k: rng.normal(scale=0.5, size=v.shape) for k, v in params.arrays.items()}
    mask = np.arange(0, n, 2)
    return prepared, params.with_arrays(arrays), mask


def max_relative_error(seed: int, dual: bool, training: bool = True) -> tuple[float, dict[str, float]]:
    prepared, params, mask = small_instance(seed, dual)
    drop_seed = 1000 + seed  # same dropout mask on every evaluation

    def loss_of(arrays):
        loss, _, _ = model.loss_and_grads(prepared, params.with_arrays(arrays), mask, drop_seed, training)
        return loss

    _, grads, _ = model.loss_and_grads(prepared, params, mask, drop_seed, training)
    errs = {}
    for name, value in params.arrays.items():
        num = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            arrays = {k: v.copy() for k, v in params.arrays.items()}
            arrays[name][idx] = value[idx] + STEP
            up = loss_of(arrays)
            arrays[name][idx] = value[idx] - STEP
            down = loss_of(arrays)
            num[idx] = (up - down) / (2 * STEP)
        ana = grads[name]
        scale = max(np.max(np.abs(ana)) + np.max(np.abs(num)), 1e-8)
        errs[name] = float(np.max(np.abs(ana - num)) / scale)
    return max(errs.values()), errs
