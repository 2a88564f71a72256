"""Central finite differences against the learner's analytic gradients."""

import numpy as np

from vulcausal.corpus import FunctionSample
from vulcausal.learner import CausalModel, TrainConfig, VanillaModel, loss_and_grads

SOURCES = [
    "int f(int a){ int b = a + 1; g(b); return b; }",
    "void h(char *p, int n){ while (n--) *p++ = 0; memset(p, 0, n); }",
    "int k(int x){ if (x > 2) return q(x, x); return 0; }",
    "int m(){ int buf_len = 4; log_it(buf_len); return buf_len; }",
    "int z(){ return 0; }",
]


def random_case(seed):
    rng = np.random.default_rng(seed)
    causal = bool(rng.integers(2))
    cfg = TrainConfig(seed=seed, d_r=int(rng.integers(2, 5)), d_m=int(rng.integers(2, 4)),
                      v_r=int(rng.integers(8, 40)), v_m=int(rng.integers(8, 30)),
                      hidden=int(rng.integers(2, 6)), m_depth=int(rng.integers(1, 5)))
    model = (CausalModel if causal else VanillaModel)(cfg)
    for k, v in model.params.items():
        model.params[k] = rng.normal(0, 0.5, v.shape)
    n = int(rng.integers(1, 4))
    picks = rng.integers(0, len(SOURCES), size=(2, n))
    xs = [FunctionSample(i, SOURCES[int(j)], int(rng.integers(2))) for i, j in enumerate(picks[0])]
    comps = [FunctionSample(100 + i, SOURCES[int(j)], 0) for i, j in enumerate(picks[1])] if causal else None
    return model, xs, [s.label for s in xs], comps


def max_relative_error(model, xs, ys, comps, h=1e-6):
    _, g = loss_and_grads(model, xs, ys, comps)
    worst = 0.0
    for k, p in model.params.items():
        num = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            lp, _ = loss_and_grads(model, xs, ys, comps)
            p[i] = old - h
            lm, _ = loss_and_grads(model, xs, ys, comps)
            p[i] = old
            num[i] = (lp - lm) / (2 * h)
        denom = max(np.linalg.norm(num) + np.linalg.norm(g[k]), 1e-12)
        worst = max(worst, np.linalg.norm(num - g[k]) / denom)
    return worst
