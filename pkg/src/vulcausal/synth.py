"""Synthetic C corpus with one causal motif and plantable spurious names.

A function is vulnerable iff its copy loop runs one element too far
(`i <= n` instead of `i < n`), the classic off-by-one overflow. With
probability `rho` a training function takes its variable names from a pool
reserved for its label; otherwise from a label-neutral pool. The perturbed
test set renders every test function with names from the opposite label's
pool, which is the variable-renaming perturbation applied by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clex import KEYWORDS
from .corpus import Corpus, FunctionSample
from .seeding import derive_rng

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u"]

FUNC_NAMES = ["copy_block", "fill_frame", "load_chunk", "pack_header", "scan_table",
              "emit_record", "read_packet", "stage_buffer", "parse_field", "merge_rows"]
CALLEES = ["log_event", "flush_out", "notify_peer", "trace_buf", "stats_add",
           "audit_len", "hash_update", "queue_push"]

N_SLOTS = 6


@dataclass
class SynthSpec:
    n_train: int = 2000
    n_test: int = 500
    rho: float = 0.9
    seed: int = 0
    n_valid: int = 250
    pool_size: int = 24
    label_api_rho: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not 0.0 <= self.label_api_rho <= 1.0:
            raise ValueError("label_api_rho must lie in [0, 1]")
        if self.pool_size < N_SLOTS:
            raise ValueError(f"pool_size must be >= {N_SLOTS}")


def name_pools(spec: SynthSpec) -> dict[str, list[str]]:
    """Disjoint pools: 'neutral', 0 and 1 (keys as str for JSON friendliness)."""
    rng = derive_rng(spec.seed, 90)
    seen: set[str] = set()
    names = []
    while len(names) < 3 * spec.pool_size:
        syll = int(rng.integers(2, 4))
        w = "".join(_ONSETS[int(rng.integers(len(_ONSETS)))] + _VOWELS[int(rng.integers(len(_VOWELS)))]
                    for _ in range(syll))
        if w not in seen and w not in KEYWORDS:
            seen.add(w)
            names.append(w)
    k = spec.pool_size
    return {"0": names[:k], "1": names[k:2 * k], "neutral": names[2 * k:]}


def label_apis() -> dict[int, list[str]]:
    return {0: ["check_bounds", "clamp_len"], 1: ["raw_copy", "fast_move"]}


_FILLERS = [
    "{c} = {c} ^ {b};",
    "if ({b} > 64) {c} = {c} * 2;",
    "{e} = {c} + {b};",
    "{e} = {b} - 1;",
    "if ({a} == 0) return -1;",
    "{f} = {e} * 3;",
    "{c} += {f};",
    "while ({f} > 8) {f} = {f} / 2;",
]


def render(names: list[str], vulnerable: bool, rng: np.random.Generator, api: str | None = None) -> str:
    a, b, c, d, e, f = names
    fname = FUNC_NAMES[int(rng.integers(len(FUNC_NAMES)))]
    callee = CALLEES[int(rng.integers(len(CALLEES)))]
    picks = sorted(rng.choice(len(_FILLERS), size=int(rng.integers(2, 5)), replace=False))
    filler = "\n    ".join(_FILLERS[i].format(a=a, b=b, c=c, d=d, e=e, f=f) for i in picks)
    op = "<=" if vulnerable else "<"
    extra = f"\n    {api}({a}, {b});" if api else ""
    return (
        f"int {fname}(char *{a}, int {b}) {{\n"
        f"    int {c} = 0;\n"
        f"    int {d};\n"
        f"    int {e} = 0;\n"
        f"    int {f} = {b};\n"
        f"    {filler}\n"
        f"    for ({d} = 0; {d} {op} {b}; {d}++) {{\n"
        f"        {a}[{d}] = {c};\n"
        f"        {c} = {c} + {d};\n"
        f"    }}\n"
        f"    {callee}({a}, {e});{extra}\n"
        f"    return {c} + {e} + {f};\n"
        f"}}\n"
    )


def _draw(spec, pools, apis, split_salt, i, label, planted_label=None):
    """Source of function i of a split; `planted_label` forces that label's name pool."""
    rng = derive_rng(spec.seed, split_salt, i)
    planted = rng.random() < spec.rho
    pool = pools[str(label)] if planted else pools["neutral"]
    if planted_label is not None:
        pool = pools[str(planted_label)]
    names = [pool[int(j)] for j in rng.choice(len(pool), size=N_SLOTS, replace=False)]
    api = None
    if rng.random() < spec.label_api_rho:
        choices = apis[label]
        api = choices[int(rng.integers(len(choices)))]
    return render(names, bool(label), rng, api)


def _labels(spec, salt, n):
    rng = derive_rng(spec.seed, salt)
    return [int(v) for v in rng.integers(0, 2, size=n)]


def gen_synthetic(spec: SynthSpec) -> tuple[Corpus, Corpus, Corpus, Corpus]:
    """train, valid, test and the name-perturbed test set (same ids as test)."""
    pools = name_pools(spec)
    apis = label_apis()
    out = []
    next_id = 0
    for split, n, salt in (("train", spec.n_train, 11), ("valid", spec.n_valid, 12), ("test", spec.n_test, 13)):
        labels = _labels(spec, salt + 100, n)
        samples = []
        for i, y in enumerate(labels):
            src = _draw(spec, pools, apis, salt, i, y)
            samples.append(FunctionSample(next_id + i, src, y, "synth", split))
        out.append(Corpus(tuple(samples), f"synth_{split}"))
        if split == "test":
            pert = [FunctionSample(next_id + i, _draw(spec, pools, apis, salt, i, y, planted_label=1 - y),
                                   y, "synth", "test")
                    for i, y in enumerate(labels)]
            out.append(Corpus(tuple(pert), "synth_test_perturbed"))
        next_id += n
    return tuple(out)
