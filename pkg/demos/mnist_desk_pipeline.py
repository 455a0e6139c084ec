"""
The full pipeline on a desk-sized MNIST
=======================================

Train a 784-64-32-10 network on 8000 MNIST-format images, attack every split
with FGSM, and fit the bit-vote detector on train, pick its threshold on val,
and score it on test.  Needs the optional ``mlxtend`` package for the images.
The same steps are available from the ``relubits`` command.
"""

import time

from relubits import (
    ActivationDataset, AttackConfig, LabeledDataset, LayerLayout, TrainConfig, bit_matrix, evaluate, fgsm,
    init_network, normalize, sweep, train,
)
from relubits.data import desk_mnist
from relubits.detector import lambda_grid
from relubits.network import accuracy
from relubits.stats import common_bit_fraction

t0 = time.time()
parts = desk_mnist((8000, 1000, 1000), seed=0)
raw = [LabeledDataset(imgs.reshape(len(imgs), -1) / 255.0, labels) for imgs, labels in parts]
tr = normalize(raw[0], "global")
va, te = (normalize(p, "global", (tr.norm_mean, tr.norm_std)) for p in raw[1:])

cfg = TrainConfig(learning_rate=0.05, epochs=20, batch_size=32, seed=0)
net = train(init_network([784, 64, 32, 10], seed=0), tr.features, tr.labels, cfg)
print("clean test accuracy", accuracy(net, te.features, te.labels))

layout = LayerLayout.of(net)
bits = {}
for name, part in (("train", tr), ("val", va), ("test", te)):
    adv = fgsm(net, part.features, part.labels, AttackConfig(0.1))
    if name == "test":
        print("FGSM test accuracy", accuracy(net, adv, part.labels))
    bits[name] = (ActivationDataset(bit_matrix(net, part.features), 0, part.labels, layout),
                  ActivationDataset(bit_matrix(net, adv), 1, part.labels, layout))

# nodes that fire for every image, or for none, per layer
for value in (1, 0):
    print(f"fraction of nodes always {value}:", common_bit_fraction(bits["train"][0], value))

res = sweep(*bits["train"], *bits["val"], lambda_grid(0.45, 0.77, 12))
for r in res.rows:
    print(f"  lambda {r.lam:.3f}  bits {r.n_bits:3d}  " + (f"val acc {r.val_accuracy:.3f}" if r.valid else "invalid"))
rep = evaluate(res.model, *bits["test"])
print("test detection accuracy", rep.accuracy, "with", rep.n_bits, "bits at lambda", round(res.selected, 4))
print(f"{time.time() - t0:.1f} s")
