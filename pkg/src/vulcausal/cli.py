"""Command-line entry point: `python -m vulcausal <subcommand> ...`."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import load_jsonl, write_jsonl
from .experiments import TOP_K_GRID, evaluate, run_generalization, run_robustness
from .learner import (CausalModel, TrainConfig, import_representations, load_model, predict_causal,
                      train_causal, train_vanilla)
from .lexicon import COUNT_MODES, SpuriousLexicon, build_lexicon
from .perturb import KINDS, perturb_corpus, write_perturbed
from .selection import SETTINGS, SelectionIndex
from .synth import SynthSpec, gen_synthetic

log = logging.getLogger("vulcausal")


def _split_file(path: str, split: str) -> Path:
    p = Path(path)
    return p / f"{split}.jsonl" if p.is_dir() else p


def _load(path: str, split: str):
    return load_jsonl(_split_file(path, split), split)


def _dump(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_ingest(a):
    corpus = load_jsonl(a.inp, a.split)
    out = write_jsonl(corpus, Path(a.out) / f"{a.split}.jsonl")
    _dump({"path": str(out), "samples": len(corpus), "vulnerable": sum(corpus.labels)})


def cmd_lexicon(a):
    lex = build_lexicon(_load(a.train, "train"), a.count_mode)
    lex.save(a.out)
    _dump({"path": a.out, "skipped": lex.skipped,
           "spurious_vars": {k: len(v) for k, v in lex.spurious_vars.items()},
           "spurious_apis": {k: len(v) for k, v in lex.spurious_apis.items()}})


def cmd_perturb(a):
    corpus = load_jsonl(a.inp, "test")
    lex = SpuriousLexicon.load(a.lexicon) if a.lexicon else None
    if lex is None and a.kind in ("var", "api", "joint"):
        raise SystemExit("--lexicon is required for var/api/joint perturbations")
    pert, records = perturb_corpus(corpus, a.kind, lex, a.topk, a.m, a.n, a.seed)
    data, recs = write_perturbed(a.out_dir, pert, records, a.kind, a.topk)
    _dump({"data": str(data), "records": str(recs), "samples": len(pert)})


def cmd_train(a):
    train = _load(a.train, "train")
    valid_path = Path(a.valid) if a.valid else _split_file(a.train, "valid")
    valid = load_jsonl(valid_path, "valid") if valid_path.exists() and valid_path != Path(a.train) \
        else train.with_samples([])
    cfg = TrainConfig(epochs=a.epochs, batch_size=a.batch, lr=a.lr, seed=a.seed, selection=a.select,
                      select_k=a.select_k, K=a.k, m_depth=a.m_depth, d_r=a.d_r)
    imported = import_representations(a.import_reps) if a.import_reps else None
    if a.mode == "vanilla":
        model, tlog = train_vanilla(train, valid, cfg, imported)
    else:
        lex = SpuriousLexicon.load(a.lexicon) if a.lexicon else build_lexicon(train)
        model, tlog = train_causal(train, valid, cfg, lex, SelectionIndex(train, lex), imported,
                                   record_pairs=bool(a.dump_pairs))
        if a.dump_pairs:
            with open(a.dump_pairs, "w", encoding="utf-8") as fh:
                for x, xp in tlog.pairs:
                    fh.write(json.dumps({"x": x, "x_prime": xp}) + "\n")
    model.save(a.out)
    _dump({"checkpoint": a.out, "best_epoch": tlog.best_epoch, "valid_f1": tlog.valid_f1,
           "epoch_loss": tlog.epoch_loss, "skipped": tlog.skipped})


def cmd_infer(a):
    model = load_model(a.model)
    data = load_jsonl(a.inp, "test")
    out = open(a.out, "w", encoding="utf-8") if a.out else sys.stdout
    try:
        if isinstance(model, CausalModel):
            train = _load(a.train, "train") if a.train else None
            if train is None and not a.xprime_self:
                raise SystemExit("--train is required for causal inference")
            rows = predict_causal(model, data, train, a.k, a.seed, a.xprime_self)
            for s, (p, y, per) in zip(data, rows):
                out.write(json.dumps({"idx": s.id, "p_vul": p, "label": y, "per_sample": per}) + "\n")
        else:
            probs = model.forward(list(data))[:, 1]
            for s, p in zip(data, probs):
                out.write(json.dumps({"idx": s.id, "p_vul": float(p), "label": int(p > 0.5)}) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def _report_out(rep, a):
    if a.report:
        rep.save(a.report)
    if a.hist:
        rep.save_histogram_csv(a.hist)
    _dump({"precision": rep.precision, "recall": rep.recall, "f1": rep.f1})


def cmd_evaluate(a):
    model = load_model(a.model)
    train = _load(a.train, "train") if a.train else None
    rep = evaluate(model, load_jsonl(a.test, "test"), train, a.k, a.seed, a.xprime_self)
    _report_out(rep, a)


def cmd_robustness(a):
    train = _load(a.train, "train")
    res = run_robustness(load_model(a.vanilla), load_model(a.causal), SpuriousLexicon.load(a.lexicon),
                         load_jsonl(a.test, "test"), a.family, [int(v) for v in a.grid.split(",")],
                         train, a.k, a.seed, a.m, a.n)
    Path(a.report).write_text(json.dumps(res.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if a.hist_dir:
        Path(a.hist_dir).mkdir(parents=True, exist_ok=True)
        res.vanilla.save_histogram_csv(Path(a.hist_dir) / "vanilla.csv")
        res.causal.save_histogram_csv(Path(a.hist_dir) / "causal.csv")
    _dump({"selected": res.selected, "vanilla_f1": res.vanilla.f1, "causal_f1": res.causal.f1,
           "flips": res.flips, "p_value": res.p_value_vul})


def cmd_generalize(a):
    model = load_model(a.model)
    train = _load(a.train, "train") if a.train else None
    rep = run_generalization(model, load_jsonl(a.test, "test"), a.exclude_project, train, a.k, a.seed)
    _report_out(rep, a)


def cmd_synth(a):
    spec = SynthSpec(n_train=a.n_train, n_test=a.n_test, rho=a.rho, seed=a.seed, n_valid=a.n_valid)
    train, valid, test, pert = gen_synthetic(spec)
    out = Path(a.out)
    for corpus, name in ((train, "train"), (valid, "valid"), (test, "test"), (pert, "test_perturbed")):
        write_jsonl(corpus, out / f"{name}.jsonl")
    _dump({"out": str(out), "train": len(train), "valid": len(valid), "test": len(test)})


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vulcausal", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="validate a JSONL dataset and store it as <out>/<split>.jsonl")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--split", choices=["train", "valid", "test"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("lexicon", help="build the spurious-name lexicon from a training split")
    p.add_argument("--train", required=True, help="directory holding train.jsonl, or the file itself")
    p.add_argument("--out", required=True)
    p.add_argument("--count-mode", choices=COUNT_MODES, default="occurrences")
    p.set_defaults(fn=cmd_lexicon)

    p = sub.add_parser("perturb", help="write a perturbed test set plus its record sidecar")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=cmd_perturb)

    p = sub.add_parser("train", help="train a vanilla or causal model")
    p.add_argument("--mode", choices=["vanilla", "causal"], required=True)
    p.add_argument("--select", choices=SETTINGS, default="var1")
    p.add_argument("--select-k", type=int)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=40, help="x' draws for validation inference")
    p.add_argument("--m-depth", type=int, default=1)
    p.add_argument("--d-r", type=int, default=64)
    p.add_argument("--import-reps")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--lexicon")
    p.add_argument("--dump-pairs", help="write the epoch-0 (x, x') id pairs to this JSONL file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="predict p_vul for every function of a JSONL file")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--xprime-self", action="store_true")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_infer)

    for name, fn in (("evaluate", cmd_evaluate), ("generalize", cmd_generalize)):
        p = sub.add_parser(name, help=f"{name} a checkpoint on a test file")
        p.add_argument("--model", required=True)
        p.add_argument("--test", required=True)
        p.add_argument("--train")
        p.add_argument("--report")
        p.add_argument("--hist")
        p.add_argument("--k", type=int, default=40)
        p.add_argument("--seed", type=int, default=0)
        if name == "evaluate":
            p.add_argument("--xprime-self", action="store_true")
        else:
            p.add_argument("--exclude-project")
        p.set_defaults(fn=fn)

    p = sub.add_parser("robustness", help="worst-case perturbation sweep, vanilla vs causal")
    p.add_argument("--grid", default=",".join(map(str, TOP_K_GRID)))
    p.add_argument("--family", choices=["var", "api", "joint"], default="var")
    p.add_argument("--vanilla", required=True)
    p.add_argument("--causal", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--hist-dir")
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--n", type=int, default=5)
    p.set_defaults(fn=cmd_robustness)

    p = sub.add_parser("synth", help="generate the synthetic spurious-name benchmark")
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--n-valid", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
