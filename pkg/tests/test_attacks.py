import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_net
from relubits import AttackConfig, NetworkSpec, fgsm, iterated_attack, random_sign_noise
from relubits.attacks import attack
from relubits.errors import DomainError
from relubits.network import accuracy, predict

# fixed-seed regression values for the blobs benchmark (all 1000 points)
FGSM_ACCURACY = {0.0: 0.983, 0.1: 0.962, 0.2: 0.941, 0.3: 0.911}
FLIP_RATE_EPS_03 = 0.07324516785350967


def positive_gradient_net():
    # loss for label 1 decreases as x grows along every coordinate, so grad_x is negative for label 1
    # and positive for label 0
    W1 = np.eye(3)
    W2 = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
    return NetworkSpec([3, 3, 2], [W1, W2], [np.ones(3), np.zeros(2)])


def test_zero_epsilon_is_identity():
    net = random_net([3, 5, 2], seed=0)
    x = np.array([0.2, -0.4, 1.0])
    np.testing.assert_array_equal(fgsm(net, x, 0, AttackConfig(0.0)), x)
    np.testing.assert_array_equal(random_sign_noise(x, AttackConfig(0.0, seed=3)), x)


def test_fgsm_all_positive_gradient():
    x = np.array([0.5, 0.5, 0.5])
    np.testing.assert_allclose(fgsm(positive_gradient_net(), x, 0, AttackConfig(0.01)), x + 0.01, rtol=0, atol=0)


def test_fgsm_clamp():
    x = np.array([0.995, 0.5, 0.0])
    out = fgsm(positive_gradient_net(), x, 0, AttackConfig(0.01, clamp=(0.0, 1.0)))
    np.testing.assert_array_equal(out, [1.0, 0.51, 0.01])
    per_feature = AttackConfig(0.01, clamp=(np.zeros(3), np.array([1.0, 0.505, 1.0])))
    np.testing.assert_array_equal(fgsm(positive_gradient_net(), x, 0, per_feature), [1.0, 0.505, 0.01])


def test_iterated_single_step_equals_fgsm(rng):
    net = random_net([4, 8, 3], seed=2)
    X = rng.normal(size=(20, 4))
    y = rng.integers(0, 3, size=20)
    np.testing.assert_array_equal(iterated_attack(net, X, y, AttackConfig(0.2, steps=1, step_size=0.2)),
                                  fgsm(net, X, y, AttackConfig(0.2)))


def test_noise_seeded_and_balanced():
    x = np.zeros(100_000)
    a = random_sign_noise(x, AttackConfig(1.0, seed=7))
    np.testing.assert_array_equal(a, random_sign_noise(x, AttackConfig(1.0, seed=7)))
    assert set(np.unique(a)) == {-1.0, 1.0}
    assert abs((a > 0).mean() - 0.5) <= 0.01
    assert not np.array_equal(a, random_sign_noise(x, AttackConfig(1.0, seed=8)))


def test_config_validation():
    for bad in (dict(epsilon=-0.1), dict(epsilon=np.inf), dict(epsilon=0.1, steps=0),
                dict(epsilon=0.1, step_size=0.0), dict(epsilon=0.1, clamp=(1.0, 0.0))):
        with pytest.raises(DomainError):
            AttackConfig(**bad)
    with pytest.raises(DomainError):
        attack("pgd", random_net([2, 2, 2], 0), np.zeros(2), 0, AttackConfig(0.1))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), eps=st.floats(0, 2), steps=st.integers(1, 5),
       step=st.floats(0.01, 1.5), kind=st.sampled_from(["fgsm", "iter", "noise"]))
def test_linf_budget_and_lattice(seed, eps, steps, step, kind):
    net = random_net([5, 6, 3], seed=seed)
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(8, 5))
    y = rng.integers(0, 3, size=8)
    cfg = AttackConfig(eps, steps=steps, step_size=step, seed=seed)
    d = attack(kind, net, X, y, cfg) - X
    assert np.abs(d).max() <= eps + 1e-12
    if kind == "fgsm":
        # x + eps - x need not round back to eps exactly
        assert np.all(np.isclose(np.abs(d), 0, atol=0) | np.isclose(np.abs(d), eps, rtol=1e-12, atol=1e-15))


def test_blobs_fgsm_accuracy_regression(blobs_benchmark):
    net, ds = blobs_benchmark
    accs = {e: accuracy(net, fgsm(net, ds.features, ds.labels, AttackConfig(e)), ds.labels) for e in FGSM_ACCURACY}
    assert accs == pytest.approx(FGSM_ACCURACY, abs=1e-12)
    vals = [accs[e] for e in sorted(accs)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_blobs_iterated_at_least_as_damaging(blobs_benchmark):
    net, ds = blobs_benchmark
    ok = predict(net, ds.features) == ds.labels
    X, y = ds.features[ok], ds.labels[ok]
    flip_fgsm = (predict(net, fgsm(net, X, y, AttackConfig(0.3))) != y).mean()
    flip_iter = (predict(net, iterated_attack(net, X, y, AttackConfig(0.3, steps=10, step_size=0.06))) != y).mean()
    assert flip_fgsm == pytest.approx(FLIP_RATE_EPS_03, abs=1e-12)
    assert flip_iter >= flip_fgsm
