"""Companion-sample (x') selection and construction for causal training.

Each procedure returns a training sample that has the same label as the
query and shares with it the targeted spurious feature, either by search
(Var1, API1) or by construction (Var2, API2, API3). Var+API chains Var1
and API3.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .clex import AnalysisError, CodeFacts, LexError, analyze, fresh_guard_ids, \
    insert_dead_code, make_dead_block, rename_variables
from .corpus import Corpus, FunctionSample
from .lexicon import LABELS, SpuriousLexicon, api_pool

log = logging.getLogger(__name__)

SETTINGS = ("var1", "var2", "api1", "api2", "api3", "var_api")
DEFAULT_K = {"var2": 3, "api2": 5, "api3": 5, "var_api": 5}


class SelectionError(ValueError):
    pass


@dataclass
class Companion:
    """x' plus provenance: which training sample it came from and what was edited."""
    sample: FunctionSample
    base_id: int
    setting: str
    fallback: bool = False
    shared: int = 0
    var_mapping: dict[str, str] = field(default_factory=dict)
    inserted_calls: list[str] = field(default_factory=list)
    flagged: bool = False


class SelectionIndex:
    def __init__(self, train: Corpus, lex: SpuriousLexicon):
        self.corpus = train
        self.lex = lex
        self.facts: dict[int, CodeFacts] = {}
        self.by_label: dict[int, list[int]] = {lb: [] for lb in LABELS}
        self.spurious_vars: dict[int, frozenset[str]] = {}
        self.spurious_apis: dict[int, frozenset[str]] = {}
        self.var_index = {lb: defaultdict(set) for lb in LABELS}
        self.api_index = {lb: defaultdict(set) for lb in LABELS}
        sv = {lb: frozenset(lex.spurious_vars[lb]) for lb in LABELS}
        sa = {lb: frozenset(lex.spurious_apis[lb]) for lb in LABELS}
        for s in train:
            try:
                f = analyze(s.source)
            except (LexError, AnalysisError):
                continue
            self.facts[s.id] = f
            self.by_label[s.label].append(s.id)
            self.spurious_vars[s.id] = frozenset(f.variables) & sv[s.label]
            self.spurious_apis[s.id] = frozenset(f.callee_names) & sa[s.label]
            for name in self.spurious_vars[s.id]:
                self.var_index[s.label][name].add(s.id)
            for name in self.spurious_apis[s.id]:
                self.api_index[s.label][name].add(s.id)
        for lb in LABELS:
            self.by_label[lb].sort()

    def sample(self, sample_id: int) -> FunctionSample:
        return self.corpus.get(sample_id)

    def facts_for(self, x: FunctionSample) -> CodeFacts:
        f = self.facts.get(x.id)
        if f is None or self.corpus.get(x.id).source != x.source:
            f = analyze(x.source)
        return f


def _random_other(idx: SelectionIndex, x: FunctionSample, rng) -> int:
    cands = [i for i in idx.by_label[x.label] if i != x.id]
    if not cands:
        raise SelectionError(f"no same-label candidate for sample {x.id}")
    return cands[int(rng.integers(len(cands)))]


def _argmax_shared(x, own: frozenset[str], inverted, idx, rng, setting) -> Companion:
    shared = Counter()
    for name in own:
        for j in inverted[x.label].get(name, ()):
            if j != x.id:
                shared[j] += 1
    if not shared:
        j = _random_other(idx, x, rng if rng is not None else np.random.default_rng(0))
        return Companion(idx.sample(j), j, setting, fallback=True)
    best = max(shared.values())
    j = min(i for i, c in shared.items() if c == best)
    return Companion(idx.sample(j), j, setting, shared=best)


def select_var1(x: FunctionSample, idx: SelectionIndex, rng=None) -> Companion:
    """Same-label sample sharing the most spurious variable names with x.

    Ties go to the smallest id. When nothing is shared (including when x
    has no spurious names) a uniformly random same-label sample is used.
    """
    own = idx.spurious_vars.get(x.id)
    if own is None:
        own = frozenset(idx.facts_for(x).variables) & frozenset(idx.lex.spurious_vars[x.label])
    return _argmax_shared(x, own, idx.var_index, idx, rng, "var1")


def select_api1(x: FunctionSample, idx: SelectionIndex, rng=None) -> Companion:
    own = idx.spurious_apis.get(x.id)
    if own is None:
        own = frozenset(idx.facts_for(x).callee_names) & frozenset(idx.lex.spurious_apis[x.label])
    return _argmax_shared(x, own, idx.api_index, idx, rng, "api1")


def construct_var2(x: FunctionSample, idx: SelectionIndex, k: int, rng) -> Companion:
    j = _random_other(idx, x, rng)
    xp = idx.sample(j)
    fp = idx.facts[j]
    donor = sorted(idx.facts_for(x).variables - fp.identifiers())
    targets = sorted(fp.variables)
    count = min(k, len(targets), len(donor))
    if count <= 0:
        return Companion(xp, j, "var2")
    olds = [targets[i] for i in rng.choice(len(targets), size=count, replace=False)]
    news = [donor[i] for i in rng.choice(len(donor), size=count, replace=False)]
    mapping = dict(zip(olds, news))
    return Companion(xp.with_source(rename_variables(xp.source, mapping, fp)), j, "var2",
                     var_mapping=mapping)


def _insert_block(xp: FunctionSample, fp: CodeFacts, calls: list[str], rng) -> FunctionSample:
    guard = fresh_guard_ids(fp.identifiers(), int(rng.integers(0, 1000)), 1)[0]
    pos = fp.insertion_points[int(rng.integers(len(fp.insertion_points)))]
    return xp.with_source(insert_dead_code(xp.source, [(pos, make_dead_block(calls, guard))], fp))


def construct_api2(x: FunctionSample, idx: SelectionIndex, k: int, rng) -> Companion:
    j = _random_other(idx, x, rng)
    xp, fp = idx.sample(j), idx.facts[j]
    first: dict[str, str] = {}
    for cs in idx.facts_for(x).callees:
        first.setdefault(cs.callee, cs.snippet)
    names = sorted(first)
    count = min(k, len(names))
    if count <= 0:
        return Companion(xp, j, "api2", flagged=True)
    picks = [first[names[i]] for i in rng.choice(len(names), size=count, replace=False)]
    return Companion(_insert_block(xp, fp, picks, rng), j, "api2", inserted_calls=picks)


def _api3_calls(label: int, lex: SpuriousLexicon, k: int, rng) -> list[str]:
    pool = api_pool(lex, label, "top10pct")
    if not pool:
        raise SelectionError("empty top-10% spurious API pool")
    count = min(k, len(pool))
    calls = []
    for i in rng.choice(len(pool), size=count, replace=False):
        snips = pool[int(i)].snippets
        calls.append(snips[int(rng.integers(len(snips)))])
    return calls


def construct_api3(x: FunctionSample, idx: SelectionIndex, k: int, rng) -> Companion:
    j = _random_other(idx, x, rng)
    xp, fp = idx.sample(j), idx.facts[j]
    calls = _api3_calls(x.label, idx.lex, k, rng)
    return Companion(_insert_block(xp, fp, calls, rng), j, "api3", inserted_calls=calls)


def construct_var_api(x: FunctionSample, idx: SelectionIndex, k: int, rng) -> Companion:
    base = select_var1(x, idx, rng)
    fp = idx.facts[base.base_id]
    calls = _api3_calls(x.label, idx.lex, k, rng)
    out = _insert_block(base.sample, fp, calls, rng)
    return Companion(out, base.base_id, "var_api", fallback=base.fallback, shared=base.shared,
                     inserted_calls=calls)


def select_companion(setting: str, x: FunctionSample, idx: SelectionIndex,
                     rng: np.random.Generator, k: int | None = None) -> Companion:
    if setting not in SETTINGS:
        raise ValueError(f"unknown selection setting {setting!r}")
    if k is None:
        k = DEFAULT_K.get(setting, 0)
    if setting == "var1":
        return select_var1(x, idx, rng)
    if setting == "api1":
        return select_api1(x, idx, rng)
    if setting == "var2":
        return construct_var2(x, idx, k, rng)
    if setting == "api2":
        return construct_api2(x, idx, k, rng)
    if setting == "api3":
        return construct_api3(x, idx, k, rng)
    return construct_var_api(x, idx, k, rng)
