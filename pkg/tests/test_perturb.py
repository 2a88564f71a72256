import numpy as np
import pytest

from cgen import soundness_setup
from soundness import check
from vulcausal.clex import analyze, find_dead_blocks
from vulcausal.corpus import FunctionSample, load_jsonl
from vulcausal.lexicon import SpuriousLexicon
from vulcausal.perturb import (KINDS, PerturbationError, PerturbationRecord, output_paths, perturb_api,
                               perturb_corpus, perturb_sample, perturb_var, write_perturbed)


@pytest.fixture(scope="module")
def setup():
    return soundness_setup(seed=1, n_generated=60)


def _lex(vars0, vars1, apis0=(), apis1=()):
    return SpuriousLexicon(
        {0: dict.fromkeys(vars0, 1), 1: dict.fromkeys(vars1, 1)},
        {0: {a: (1, [f"{a}(0)"]) for a in apis0}, 1: {a: (1, [f"{a}(x, 1)"]) for a in apis1}},
        {0: list(vars0), 1: list(vars1)}, {0: list(apis0), 1: list(apis1)})


@pytest.mark.parametrize("kind", ["var", "api", "joint"])
def test_sound_on_corpus(setup, kind):
    lex, test = setup
    pert, recs = perturb_corpus(test, kind, lex, K=10, m=3, n=2, seed=5)
    for orig, p, r in zip(test, pert, recs):
        assert check(orig, p, r, lex) == [], orig.id


@pytest.mark.parametrize("kind", ["random_var", "random_api"])
def test_random_baselines_sound(setup, kind):
    lex, test = setup
    pert, recs = perturb_corpus(test, kind, None, m=2, n=2, seed=5)
    for orig, p, r in zip(test, pert, recs):
        assert check(orig, p, r, random_baseline=True) == []
        if kind == "random_var":
            assert all(v.startswith("v") for v in r.var_mapping.values())
        else:
            assert all(t.startswith("int _i_") for _, t in r.inserted_blocks)


def test_var_uses_opposite_topk():
    lex = _lex(["aa", "bb", "cc"], ["xx"])
    s = FunctionSample(0, "int f(int p, int q){ return p + q; }", 1)
    out, rec = perturb_var(s, lex, 2, np.random.default_rng(0))
    assert set(rec.var_mapping.values()) <= {"aa", "bb"}
    assert set(rec.var_mapping) == {"p", "q"} and rec.kept_vars == []


def test_var_pool_smaller_than_variables():
    lex = _lex(["aa"], ["xx"])
    s = FunctionSample(0, "int f(int p, int q){ return p + q; }", 1)
    out, rec = perturb_var(s, lex, 5, np.random.default_rng(0))
    assert len(rec.var_mapping) == 1 and len(rec.kept_vars) == 1
    assert check(s, out, rec, lex) == []


def test_var_skips_names_already_present():
    lex = _lex(["p", "aa"], ["xx"])
    s = FunctionSample(0, "int f(int p){ return p; }", 1)
    _, rec = perturb_var(s, lex, 5, np.random.default_rng(0))
    assert rec.var_mapping == {"p": "aa"}


def test_api_blocks_and_errors():
    lex = _lex(["aa"], ["xx"], ["g0", "g1"], [])
    s = FunctionSample(0, "int f(int p){ p = 1; return p; }", 1)
    out, rec = perturb_api(s, lex, m=5, n=3, rng=np.random.default_rng(0))
    assert len(find_dead_blocks(out.source)) == 3
    for _, text in rec.inserted_blocks:
        assert text.count("g0(0);") == 1 and text.count("g1(0);") == 1
    with pytest.raises(PerturbationError):
        perturb_api(s.__class__(1, s.source, 0), lex, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        perturb_api(s, lex, m=0, rng=np.random.default_rng(0))


def test_deterministic_and_independent_of_order(setup):
    lex, test = setup
    a, ra = perturb_corpus(test, "joint", lex, seed=9)
    b, rb = perturb_corpus(test.with_samples(reversed(test.samples)), "joint", lex, seed=9)
    assert {s.id: s.source for s in a} == {s.id: s.source for s in b}
    c, _ = perturb_corpus(test, "joint", lex, seed=10)
    assert [s.source for s in a] != [s.source for s in c]
    s = test[0]
    assert perturb_sample(s, "var", lex, seed=3)[0] == perturb_sample(s, "var", lex, seed=3)[0]


def test_perturbed_still_analyzable(setup):
    lex, test = setup
    for kind in KINDS:
        pert, _ = perturb_corpus(test, kind, lex, seed=2)
        for s in pert:
            analyze(s.source)


def test_write_outputs(setup, tmp_path):
    lex, test = setup
    pert, recs = perturb_corpus(test, "var", lex, K=5, seed=0)
    data, rp = write_perturbed(tmp_path, pert, recs, "var", 5)
    assert (data, rp) == output_paths(tmp_path, "test", "var", 5)
    assert data.name == "test.var.K5.jsonl" and rp.name == "test.var.K5.records.jsonl"
    back = load_jsonl(data, "test")
    assert [s.source for s in back] == [s.source for s in pert]
    rec = [PerturbationRecord.from_json(l) for l in rp.read_text().splitlines()]
    assert rec == recs


def test_zero_variable_sample():
    lex = _lex(["aa"], ["xx"], ["g0"], ["h0"])
    s = FunctionSample(0, "int f(){ return 0; }", 1)
    out, rec = perturb_var(s, lex, 5, np.random.default_rng(0))
    assert out.source == s.source and rec.var_mapping == {}
    from vulcausal.perturb import perturb_joint
    j, jr = perturb_joint(s, lex, 5, 1, 1, np.random.default_rng(3))
    a, ar = perturb_api(s, lex, 1, 1, np.random.default_rng(3))
    assert j.source == a.source and jr.inserted_blocks == ar.inserted_blocks


def test_exhausted_pool_records_kept():
    lex = _lex(["aa", "bb"], ["xx"])
    s = FunctionSample(0, "int f(int p, int q, int r){ return p + q + r; }", 1)
    _, rec = perturb_var(s, lex, 5, np.random.default_rng(0))
    assert len(rec.var_mapping) == 2 and len(rec.kept_vars) == 1


def test_minimal_and_stacked_blocks():
    lex = _lex(["aa"], ["xx"], ["g0", "g1"], [])
    s = FunctionSample(0, "int f(){ return 0; }", 1)
    assert len(analyze(s.source).insertion_points) == 2
    out, rec = perturb_api(s, lex, m=1, n=1, rng=np.random.default_rng(0))
    assert len(rec.inserted_blocks) == 1 and rec.inserted_blocks[0][1].count(";") == 2
    one = FunctionSample(1, "void f(){}", 1)
    assert analyze(one.source).insertion_points == [9]
    out, rec = perturb_api(one, lex, m=1, n=3, rng=np.random.default_rng(0))
    assert {p for p, _ in rec.inserted_blocks} == {9} and len(find_dead_blocks(out.source)) == 3


def test_random_var_example():
    from vulcausal.perturb import perturb_random
    s = FunctionSample(0, "int g(int x){return x;}", 0)
    out, rec = perturb_random(s, "random_var", np.random.default_rng(0))
    assert out.source == "int g(int v0){return v0;}"
    out, rec = perturb_random(s, "random_api", np.random.default_rng(0), m=1, n=1)
    assert len(rec.inserted_blocks) == 1 and "fn0(0);" in rec.inserted_blocks[0][1]


def test_random_never_uses_lexicon(setup):
    lex, test = setup
    names = set(lex.var_freq[0]) | set(lex.var_freq[1])
    pert, recs = perturb_corpus(test, "random_var", lex, seed=1)
    assert all(not set(r.var_mapping.values()) & names for r in recs)
