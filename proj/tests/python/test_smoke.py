"""End-to-end smoke test of the python bindings."""

import json
import math
import os
import tempfile

import numpy as np

import treebp


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)


def softmax_loss(logits, label):
    z = logits - logits.max()
    p = np.exp(z) / np.exp(z).sum()
    return -math.log(p[label])


def main():
    cfg = treebp.Tree3Config()
    cfg.k = 2
    cfg.m = 3
    cfg.activation = treebp.Activation.ReLU
    cfg.geometry = treebp.Geometry.CIFAR
    cfg.validate()
    check(cfg.channels == 3, "cifar has 3 channels")
    check(cfg.conv_hw == 28, "32 - 5 + 1")
    check(cfg.pool_hw == 14, "28 / 2")
    check(cfg.rects == 7, "seven bands")
    check(cfg.fc_rows == 7 * 3 * 3, "R*C*M")

    params = treebp.tree3_init(cfg, 1)
    wc = params.w_conv
    check(wc.shape == (3, 2, 5, 5), f"w_conv shape {wc.shape}")
    check(params.w_tree.shape == (3, 3, 2, 14, 14), "w_tree shape")
    check(params.w_fc.shape == (63, 10), "w_fc shape")
    check(abs(float(np.std(wc)) - math.sqrt(2 / 25)) < 0.1, "he stddev")

    again = treebp.tree3_init(cfg, 1)
    check(np.array_equal(wc, again.w_conv), "seeded init is deterministic")

    rng = np.random.default_rng(0)
    img = rng.uniform(-1, 1, size=(3, 32, 32)).astype(np.float32)

    fwd = treebp.tree3_forward(params, cfg, img)
    check(fwd["logits"].shape == (10,), "ten logits")
    check(fwd["tree_out"].shape == (3, 3, 7), "M x C x R")
    check(fwd["pool_out"].shape == (6, 14, 14), "C*K pooled maps")
    check(np.all(fwd["pool_out"] >= 0), "relu pooled maps are nonnegative")

    pred = treebp.predict_tree3(params, cfg, img)
    check(pred == int(np.argmax(fwd["logits"])), "predict matches argmax")

    label = 4
    bwd = treebp.tree3_backward(params, cfg, img, label)
    manual = softmax_loss(fwd["logits"].astype(np.float64), label)
    check(abs(bwd["loss"] - manual) < 1e-5, f"loss {bwd['loss']} vs {manual}")
    zf = bwd["zero_fracs"]
    check(len(zf) == 3 and all(0 <= f <= 1 for f in zf), "zero fractions")

    pruned = treebp.tree3_backward(params, cfg, img, label, pruned=True)
    for name in ("w_conv", "w_tree", "w_fc"):
        a = getattr(bwd["grads"], name)
        b = getattr(pruned["grads"], name)
        check(np.array_equal(a, b), f"pruned == reference for {name}")

    # finite differences agree with the analytic gradients
    report = treebp.fd_check_tree3(cfg, seed=1, eps=1e-5)
    check(report["max_rel"] < 1e-6, f"fd max_rel {report['max_rel']}")

    # one SGD step moves the parameters in the gradient direction
    velocity = treebp.tree3_zero(cfg)
    before = np.copy(params.w_fc)
    g = bwd["grads"]
    treebp.sgd_nesterov_step(params, g, velocity, 0.1, 0.9, 0.0)
    after = params.w_fc
    check(not np.array_equal(before, after), "step changed the weights")
    moved = before - after
    gfc = g.w_fc
    mask = gfc != 0
    check(np.all(np.sign(moved[mask]) == np.sign(0.19 * gfc[mask])),
          "update direction follows the gradient")

    # thresholding zeroes small entries in place
    frac = treebp.threshold_gradients(g, 1e30)
    check(frac == 0.0, "everything below a huge threshold")
    check(np.all(g.w_fc == 0), "grads zeroed in place")

    # route counting
    check(treebp.count_routes_tree3() == 1, "single route")
    check(treebp.count_routes_lenet5(treebp.LeNet5Config()) == 1008000,
          "lenet route count")
    big = treebp.Tree3Config()
    big.k = 6
    big.m = 16
    check(treebp.count_gradient_instances_tree3(big) == 5644800, "instances")

    # plans are enumerable and serializable
    names = treebp.plan_names()
    check("tree3-mnist" in names, "plan catalog")
    plan = json.loads(treebp.plan_json("tree3-cifar-desk"))
    check(plan["k"] == 6 and plan["m"] == 16, "desk plan config")

    # checkpoint round-trip
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.ckpt")
        treebp.save_tree3_checkpoint(path, params, cfg)
        loaded, cfg2 = treebp.load_tree3_checkpoint(path)
        check(cfg2.k == cfg.k and cfg2.m == cfg.m, "config round-trip")
        check(np.array_equal(loaded.w_conv, params.w_conv), "weights round-trip")

    # lenet path
    lcfg = treebp.LeNet5Config()
    lcfg.c1 = 3
    lcfg.c2 = 3
    lcfg.f1 = 10
    lcfg.f2 = 8
    lp = treebp.lenet5_init(lcfg, 1)
    lfwd = treebp.lenet5_forward(lp, lcfg, img)
    check(lfwd["logits"].shape == (10,), "lenet logits")
    lbwd = treebp.lenet5_backward(lp, lcfg, img, 2)
    lmanual = softmax_loss(lfwd["logits"].astype(np.float64), 2)
    check(abs(lbwd["loss"] - lmanual) < 1e-5, "lenet loss")

    # shape errors surface as ValueError
    try:
        treebp.tree3_forward(params, cfg, img[:, :16, :16])
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError for a wrong image shape")

    print("python smoke: all checks passed")


if __name__ == "__main__":
    main()
