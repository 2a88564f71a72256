"""Semantic-preserving test-set perturbations that expose spurious features.

Variable renaming draws names exclusive to the opposite label; API
perturbation injects opposite-label calls as unreachable dead code. The
random_* kinds are controls that use synthetic names instead of the lexicon.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .clex import (analyze, fresh_guard_ids, insert_dead_code, make_dead_block, rename_variables,
                   tokenize)
from .corpus import Corpus, FunctionSample, write_jsonl
from .lexicon import SpuriousLexicon, api_pool, topk_spurious_vars
from .seeding import KIND_SALT, derive_rng

KINDS = ("var", "api", "joint", "random_var", "random_api")


class PerturbationError(ValueError):
    pass


@dataclass
class PerturbationRecord:
    sample_id: int
    kind: str
    var_mapping: dict[str, str] = field(default_factory=dict)
    inserted_blocks: list[tuple[int, str]] = field(default_factory=list)
    seed: int | None = None
    params: dict = field(default_factory=dict)
    kept_vars: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        d["inserted_blocks"] = [list(b) for b in self.inserted_blocks]
        return json.dumps(d, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "PerturbationRecord":
        d = json.loads(line)
        d["inserted_blocks"] = [tuple(b) for b in d["inserted_blocks"]]
        return cls(**d)


def _choose_names(variables, pool, rng):
    """Pair shuffled variables with pool names drawn without replacement."""
    order = sorted(variables)
    rng.shuffle(order)
    pool = list(pool)
    picks = rng.permutation(len(pool))[:len(order)] if pool else []
    mapping = {v: pool[j] for v, j in zip(order, picks)}
    kept = sorted(order[len(mapping):])
    return mapping, kept


def _var_mapping(facts, taken, lex, label, K, rng):
    pool = [n for n in topk_spurious_vars(lex, 1 - label, K) if n not in taken]
    return _choose_names(facts.variables, pool, rng)


def perturb_var(sample: FunctionSample, lex: SpuriousLexicon, K: int,
                rng: np.random.Generator, seed: int | None = None):
    facts = analyze(sample.source)
    mapping, kept = _var_mapping(facts, facts.identifiers(), lex, sample.label, K, rng)
    out = rename_variables(sample.source, mapping, facts)
    rec = PerturbationRecord(sample.id, "var", mapping, [], seed, {"K": K}, kept)
    return sample.with_source(out), rec


def _api_blocks(facts, entries, m, n, rng, taken):
    """n blocks of m distinct callees each, positions drawn with replacement."""
    if not entries:
        raise PerturbationError("no spurious APIs")
    m_eff = min(m, len(entries))
    points = facts.insertion_points
    guard_start = int(rng.integers(0, 1000))
    guards = fresh_guard_ids(taken, guard_start, n)
    blocks = []
    for g in guards:
        pos = points[int(rng.integers(len(points)))]
        chosen = rng.choice(len(entries), size=m_eff, replace=False)
        calls = []
        for j in chosen:
            snips = entries[int(j)].snippets
            calls.append(snips[int(rng.integers(len(snips)))])
        blocks.append((pos, make_dead_block(calls, g)))
    return blocks


def perturb_api(sample: FunctionSample, lex: SpuriousLexicon, m: int = 5, n: int = 5,
                rng: np.random.Generator = None, seed: int | None = None):
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    facts = analyze(sample.source)
    entries = api_pool(lex, 1 - sample.label, "top100")
    blocks = _api_blocks(facts, entries, m, n, rng, facts.identifiers())
    out = insert_dead_code(sample.source, blocks, facts)
    rec = PerturbationRecord(sample.id, "api", {}, blocks, seed, {"m": m, "n": n})
    return sample.with_source(out), rec


def _block_identifiers(blocks) -> set[str]:
    return {t.text for _, text in blocks for t in tokenize(text) if t.kind == "identifier"}


def perturb_joint(sample: FunctionSample, lex: SpuriousLexicon, K: int = 5, m: int = 5, n: int = 5,
                  rng: np.random.Generator = None, seed: int | None = None):
    """API dead code first, then rename the original variables.

    Identifiers inside the injected blocks are left alone; the renaming is
    applied to the original text and the blocks are spliced at the same
    statement boundaries afterwards, which yields the same result as
    renaming outside the blocks.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    facts = analyze(sample.source)
    entries = api_pool(lex, 1 - sample.label, "top100")
    blocks = _api_blocks(facts, entries, m, n, rng, facts.identifiers())
    taken = facts.identifiers() | _block_identifiers(blocks)
    mapping, kept = _var_mapping(facts, taken, lex, sample.label, K, rng)
    renamed = rename_variables(sample.source, mapping, facts)
    out = _splice_by_point_index(sample.source, renamed, facts, blocks)
    rec = PerturbationRecord(sample.id, "joint", mapping, blocks, seed, {"K": K, "m": m, "n": n}, kept)
    return sample.with_source(out), rec


def _splice_by_point_index(original, renamed, facts, blocks):
    index = {p: i for i, p in enumerate(facts.insertion_points)}
    new_points = analyze(renamed).insertion_points
    moved = [(new_points[index[off]], text) for off, text in blocks]
    return insert_dead_code(renamed, moved)


def _fresh_names(prefix: str, taken: set[str], count: int) -> list[str]:
    names, k = [], 0
    while len(names) < count:
        if f"{prefix}{k}" not in taken:
            names.append(f"{prefix}{k}")
        k += 1
    return names


def perturb_random(sample: FunctionSample, kind: str, rng: np.random.Generator,
                   m: int = 5, n: int = 5, seed: int | None = None):
    facts = analyze(sample.source)
    taken = facts.identifiers()
    if kind == "random_var":
        order = sorted(facts.variables)
        rng.shuffle(order)
        mapping = dict(zip(order, _fresh_names("v", taken, len(order))))
        out = rename_variables(sample.source, mapping, facts)
        return sample.with_source(out), PerturbationRecord(sample.id, kind, mapping, [], seed, {})
    if kind == "random_api":
        fns = _fresh_names("fn", taken, m * n)
        guards = fresh_guard_ids(taken, int(rng.integers(0, 1000)), n)
        blocks = []
        for b, g in enumerate(guards):
            pos = facts.insertion_points[int(rng.integers(len(facts.insertion_points)))]
            calls = [f"{f}(0)" for f in fns[b * m:(b + 1) * m]]
            blocks.append((pos, make_dead_block(calls, g)))
        out = insert_dead_code(sample.source, blocks, facts)
        return sample.with_source(out), PerturbationRecord(sample.id, kind, {}, blocks, seed, {"m": m, "n": n})
    raise ValueError(f"unknown random perturbation {kind!r}")


def perturb_sample(sample, kind, lex, K=5, m=5, n=5, seed=0):
    """Apply one perturbation kind with the per-sample RNG stream."""
    rng = derive_rng(seed, sample.id, KIND_SALT[kind])
    if kind == "var":
        return perturb_var(sample, lex, K, rng, seed)
    if kind == "api":
        return perturb_api(sample, lex, m, n, rng, seed)
    if kind == "joint":
        return perturb_joint(sample, lex, K, m, n, rng, seed)
    return perturb_random(sample, kind, rng, m, n, seed)


def perturb_corpus(corpus: Corpus, kind: str, lex: SpuriousLexicon | None,
                   K: int = 5, m: int = 5, n: int = 5, seed: int = 0):
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    out, records = [], []
    for s in corpus:
        p, rec = perturb_sample(s, kind, lex, K, m, n, seed)
        out.append(p)
        records.append(rec)
    return corpus.with_samples(out), records


def output_paths(out_dir: str | Path, corpus_name: str, kind: str, K: int):
    base = Path(out_dir) / f"{corpus_name}.{kind}.K{K}"
    return base.with_name(base.name + ".jsonl"), base.with_name(base.name + ".records.jsonl")


def write_perturbed(out_dir, corpus: Corpus, records, kind: str, K: int):
    data_path, rec_path = output_paths(out_dir, corpus.name, kind, K)
    write_jsonl(corpus, data_path)
    with rec_path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
    return data_path, rec_path
