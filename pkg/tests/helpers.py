import numpy as np

from rpvl.core import TabularModel


def random_pv(rng, S, vmax=50.0, sparse=False):
    p = rng.dirichlet(np.ones(S))
    if sparse and S > 1:
        p[rng.random(S) < 0.3] = 0.0
        if p.sum() == 0:
            p[rng.integers(S)] = 1.0
        p /= p.sum()
    v = rng.uniform(0.0, vmax, size=S)
    return p, v


def random_model(rng, S=4, H=3, max_actions=3, sparse=False):
    actions = [tuple(range(rng.integers(1, max_actions + 1))) for _ in range(S)]
    n_rows = sum(len(a) for a in actions)
    K = rng.dirichlet(np.ones(S), size=(H, n_rows))
    if sparse:
        K = np.where(rng.random(K.shape) < 0.4, 0.0, K)
        K[..., 0] += (K.sum(axis=-1) == 0)
        K /= K.sum(axis=-1, keepdims=True)
    # exact row sums so validation accepts the model
    K[..., -1] = 1.0 - K[..., :-1].sum(axis=-1)
    K = np.clip(K, 0.0, None)
    R = rng.uniform(0.0, 1.0, size=(H, n_rows))
    return TabularModel(S, actions, R, K)
