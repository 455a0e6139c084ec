"""
Detecting FGSM inputs from activation bits
==========================================

Two overlapping Gaussian blobs, a small network, and an FGSM attack.  We then
ask which hidden nodes fire differently on clean and attacked points, and how
well a vote over those nodes tells the two apart.
"""

import numpy as np

from relubits import (
    ActivationDataset, AttackConfig, LayerLayout, SplitSpec, TrainConfig, activation_frequency, bit_matrix,
    evaluate, fgsm, frequency_difference, init_network, split, sweep, synth_blobs, train,
)
from relubits.detector import lambda_grid
from relubits.network import accuracy

ds = synth_blobs(1000, [[-1.0, 0.0], [1.0, 0.0]], 0.6, seed=0)
tr, va, te = split(ds, SplitSpec(seed=0))

net = train(init_network([2, 32, 32, 2], seed=0), tr.features, tr.labels,
            TrainConfig(learning_rate=0.1, epochs=30, seed=0))
print("clean test accuracy", accuracy(net, te.features, te.labels))

cfg = AttackConfig(epsilon=0.5)
layout = LayerLayout.of(net)
bits = {}
for name, part in (("train", tr), ("val", va), ("test", te)):
    adv = fgsm(net, part.features, part.labels, cfg)
    bits[name] = (ActivationDataset(bit_matrix(net, part.features), 0, part.labels, layout),
                  ActivationDataset(bit_matrix(net, adv), 1, part.labels, layout))
    if name == "test":
        print("attacked test accuracy", accuracy(net, adv, part.labels))

# how differently does each node fire on clean and attacked inputs?
d = frequency_difference(activation_frequency(bits["train"][0]), activation_frequency(bits["train"][1]))
order = np.argsort(-np.abs(d))
print("nodes with the largest frequency gap:")
for k in order[:6]:
    print(f"  node {k:3d} (layer {layout.locate(int(k))[0]}): {d[k]:+.3f}")

res = sweep(*bits["train"], *bits["val"], lambda_grid(0.45, 0.77, 12))
for r in res.rows:
    print(f"  lambda {r.lam:.3f}  bits {r.n_bits:3d}  val acc {r.val_accuracy:.3f}" if r.valid
          else f"  lambda {r.lam:.3f}  no discriminator bits")
rep = evaluate(res.model, *bits["test"])
print("selected lambda", res.selected, "test detection accuracy", rep.accuracy,
      "tp", round(rep.tp_rate, 3), "tn", round(rep.tn_rate, 3))
