import time

import numpy as np

from gradcheck import fd_gradients
from fcrank.model import Hyperparams, ModelParams, PairInputs, backward, forward


def make_inputs(seed, n=6, m=10, x=2, y=2):
    rng = np.random.default_rng(seed)
    return PairInputs(
        q_tokens=["q%d" % i for i in range(n)],
        d_tokens=["d%d" % j for j in range(m)],
        tq=rng.standard_normal((n, 300)),
        lq=rng.standard_normal((n, 1024)),
        td=rng.standard_normal((m, 300)),
        ld=rng.standard_normal((m, 1024)),
        vq=rng.standard_normal((x, 2048)),
        vd=rng.standard_normal((y, 2048)),
    )


def test_every_tensor_matches_finite_differences():
    hyper = Hyperparams(proj_dim=8, filters=2, kmax=2, num_cnns=2)
    inputs = make_inputs(seed=42)
    params = ModelParams.initialize(hyper, "MAN", seed=1)
    started = time.monotonic()

    _, cache = forward(inputs, params, hyper, "MAN")
    analytic = backward(1.0, inputs, params, hyper, cache)
    errors = fd_gradients(inputs, params, hyper, analytic)

    elapsed = time.monotonic() - started
    expected = {"w1", "b1", "w2", "b2", "w3", "b3", "conv1", "conv2", "w4", "w5", "w6"}
    assert set(errors) == expected
    for name, err in sorted(errors.items()):
        print("gradient %-6s max rel err %.3e" % (name, err))
        assert err < 1e-4, "gradient mismatch for %s: %.3e" % (name, err)
    print("gradient sweep took %.1f s" % elapsed)
    assert elapsed < 60.0


def test_vmn_visual_gradients():
    hyper = Hyperparams(proj_dim=8, filters=2, kmax=2, num_cnns=1)
    inputs = make_inputs(seed=7)
    params = ModelParams.initialize(hyper, "VMN", seed=3)
    _, cache = forward(inputs, params, hyper, "VMN")
    analytic = backward(1.0, inputs, params, hyper, cache)
    # only the visual projection receives gradient
    for name in analytic:
        if name not in ("w3", "b3"):
            assert np.array_equal(analytic[name], np.zeros_like(analytic[name]))
    step = 1e-6
    flat = params["b3"].ravel()
    rng = np.random.default_rng(0)
    for i in rng.choice(flat.size, size=20, replace=False):
        orig = flat[i]
        flat[i] = orig + step
        fp, _ = forward(inputs, params, hyper, "VMN")
        flat[i] = orig - step
        fm, _ = forward(inputs, params, hyper, "VMN")
        flat[i] = orig
        num = (fp - fm) / (2 * step)
        ana = analytic["b3"].ravel()[i]
        assert abs(num - ana) / max(abs(num), abs(ana), 1e-8) < 1e-4


def test_ctm_gradients_spot_check():
    hyper = Hyperparams(proj_dim=8, filters=2, kmax=2, num_cnns=1)
    inputs = make_inputs(seed=9)
    params = ModelParams.initialize(hyper, "CTM", seed=5)
    _, cache = forward(inputs, params, hyper, "CTM")
    analytic = backward(1.0, inputs, params, hyper, cache)
    assert np.array_equal(analytic["w3"], np.zeros_like(analytic["w3"]))
    step = 1e-5
    rng = np.random.default_rng(1)
    for name in ("w1", "w2", "conv1", "w4"):
        flat = params[name].ravel()
        for i in rng.choice(flat.size, size=min(15, flat.size), replace=False):
            orig = flat[i]
            flat[i] = orig + step
            fp, _ = forward(inputs, params, hyper, "CTM")
            flat[i] = orig - step
            fm, _ = forward(inputs, params, hyper, "CTM")
            flat[i] = orig
            num = (fp - fm) / (2 * step)
            ana = analytic[name].ravel()[i]
            assert abs(num - ana) / max(abs(num), abs(ana), 1e-8) < 1e-4, name
