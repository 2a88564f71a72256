"""Experiment drivers: evaluation, robustness sweeps and cross-corpus generalization."""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Corpus, exclude_project
from .learner import CausalModel, predict
from .lexicon import SpuriousLexicon
from .metrics import EvalReport, cohens_d, count_flips, mann_whitney_u
from .perturb import perturb_corpus

FAMILY_KIND = {"var": "var", "api": "api", "joint": "joint"}
TOP_K_GRID = (5, 10, 15, 20, 25, 50, 100)


def evaluate(model, test: Corpus, train: Corpus | None = None, K: int = 40, seed: int = 0,
             xprime_self: bool = False) -> EvalReport:
    if len(test) == 0:
        raise ValueError("nothing to evaluate")
    if isinstance(model, CausalModel) and train is None and not xprime_self:
        raise ValueError("causal evaluation needs the training corpus for x' sampling")
    res = predict(model, test, train, K, seed, xprime_self)
    return EvalReport.from_predictions([s.id for s in test], test.labels,
                                       [p for p, _ in res], [y for _, y in res])


@dataclass
class RobustnessResult:
    family: str
    rows: list[dict]
    selected: int
    vanilla: EvalReport
    causal: EvalReport
    flips: int
    p_value_vul: float
    cohens_d_vul: tuple[float, str]
    perturbed: Corpus = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "grid": self.rows,
            "selected": self.selected,
            "vanilla": self.vanilla.to_dict(),
            "causal": self.causal.to_dict(),
            "flips": self.flips,
            "mann_whitney_p_vulnerable": self.p_value_vul,
            "cohens_d_vulnerable": {"d": self.cohens_d_vul[0], "magnitude": self.cohens_d_vul[1]},
        }


def _grid_params(family: str, point: int, m: int, n: int) -> dict:
    # var/joint sweep the Top-K pool size; api sweeps the number of injected blocks
    if family == "api":
        return {"K": 5, "m": m, "n": point}
    return {"K": point, "m": m, "n": n}


def compare_reports(vanilla: EvalReport, causal: EvalReport):
    """Flips plus the vulnerable-class density shift between two reports on the same data."""
    a, b = vanilla.probs_for_label(1), causal.probs_for_label(1)
    p = mann_whitney_u(a, b) if a and b else 1.0
    try:
        d = cohens_d(b, a) if len(a) > 1 and len(b) > 1 else (0.0, "trivial")
    except ValueError:
        d = (float("inf"), "large")
    return count_flips(vanilla, causal), p, d


def run_robustness(vanilla, causal, lex: SpuriousLexicon, test: Corpus, family: str,
                   grid=TOP_K_GRID, train: Corpus | None = None, K: int = 40, seed: int = 0,
                   m: int = 5, n: int = 5) -> RobustnessResult:
    """Perturb `test` at every grid point, pick the point hardest for the vanilla model,
    and compare vanilla against causal there."""
    if family not in FAMILY_KIND:
        raise ValueError(f"family must be one of {sorted(FAMILY_KIND)}")
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    rows, sets, reports = [], [], []
    for point in grid:
        kw = _grid_params(family, point, m, n)
        pert, _ = perturb_corpus(test, FAMILY_KIND[family], lex, kw["K"], kw["m"], kw["n"], seed)
        rep = evaluate(vanilla, pert, train, K, seed)
        rows.append({"param": point, **kw, "vanilla_f1": rep.f1})
        sets.append(pert)
        reports.append(rep)
    worst = min(range(len(grid)), key=lambda i: (rows[i]["vanilla_f1"], i))
    causal_rep = evaluate(causal, sets[worst], train, K, seed)
    flips, p, d = compare_reports(reports[worst], causal_rep)
    causal_rep.flips = flips
    return RobustnessResult(family, rows, grid[worst], reports[worst], causal_rep, flips, p, d, sets[worst])


def run_generalization(model, other: Corpus, exclude: str | None = None, train: Corpus | None = None,
                       K: int = 40, seed: int = 0) -> EvalReport:
    data = exclude_project(other, exclude) if exclude else other
    if len(data) == 0:
        raise ValueError("no samples left after project exclusion")
    return evaluate(model, data, train, K, seed)
