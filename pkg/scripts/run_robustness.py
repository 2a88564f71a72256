"""Worst-case perturbation sweep for a pair of trained checkpoints.

Perturbs the test split at every grid point, keeps the point where the
vanilla model scores lowest and compares both models there.

    python scripts/run_robustness.py --run runs/synth --family var
"""

import argparse
import json
from pathlib import Path

from vulcausal.corpus import load_jsonl
from vulcausal.experiments import TOP_K_GRID, run_robustness
from vulcausal.learner import load_model
from vulcausal.lexicon import SpuriousLexicon


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--run", default="runs/synth", help="directory written by run_synthetic.py")
    ap.add_argument("--family", choices=["var", "api", "joint"], default="var")
    ap.add_argument("--grid", default=",".join(map(str, TOP_K_GRID)))
    ap.add_argument("--k", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    run = Path(args.run)
    train = load_jsonl(run / "train.jsonl", "train")
    test = load_jsonl(run / "test.jsonl", "test")
    res = run_robustness(load_model(run / "vanilla.json"), load_model(run / "causal.json"),
                         SpuriousLexicon.load(run / "lexicon.json"), test, args.family,
                         [int(g) for g in args.grid.split(",")], train, args.k, args.seed)
    out = run / f"robustness_{args.family}.json"
    out.write_text(json.dumps(res.to_dict(), indent=1, sort_keys=True) + "\n")
    for row in res.rows:
        print(f"{row['param']:>5}  vanilla f1 {row['vanilla_f1']:.3f}")
    print(f"selected {res.selected}: vanilla {res.vanilla.f1:.3f} causal {res.causal.f1:.3f} "
          f"flips {res.flips} p {res.p_value_vul:.2e} d {res.cohens_d_vul[0]:.2f} ({res.cohens_d_vul[1]})")


if __name__ == "__main__":
    main()
