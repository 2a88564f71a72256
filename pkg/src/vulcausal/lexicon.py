"""Per-label name/API frequency tables and their label-exclusive subsets."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .clex import AnalysisError, CodeFacts, LexError, analyze
from .corpus import Corpus

log = logging.getLogger(__name__)

LABELS = (0, 1)
SNIPPET_CAP = 50
COUNT_MODES = ("occurrences", "documents")


@dataclass(frozen=True)
class ApiEntry:
    callee: str
    count: int
    snippets: tuple[str, ...]


@dataclass
class SpuriousLexicon:
    var_freq: dict[int, dict[str, int]]
    api_freq: dict[int, dict[str, tuple[int, list[str]]]]
    spurious_vars: dict[int, list[str]]
    spurious_apis: dict[int, list[str]]
    count_mode: str = "occurrences"
    skipped: int = 0
    _var_rank: dict = field(default=None, init=False, repr=False)

    def spurious_var_set(self, label: int) -> frozenset[str]:
        if self._var_rank is None:
            self._var_rank = {lb: frozenset(self.spurious_vars[lb]) for lb in LABELS}
        return self._var_rank[label]

    def to_json(self) -> str:
        obj = {
            "var_freq": {str(lb): self.var_freq[lb] for lb in LABELS},
            "api_freq": {str(lb): {c: {"count": n, "snippets": list(sn)}
                                   for c, (n, sn) in self.api_freq[lb].items()}
                         for lb in LABELS},
            "spurious_vars": {str(lb): self.spurious_vars[lb] for lb in LABELS},
            "spurious_apis": {str(lb): self.spurious_apis[lb] for lb in LABELS},
            "count_mode": self.count_mode,
            "skipped": self.skipped,
        }
        return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "SpuriousLexicon":
        obj = json.loads(text)
        return cls(
            var_freq={lb: dict(obj["var_freq"][str(lb)]) for lb in LABELS},
            api_freq={lb: {c: (v["count"], list(v["snippets"]))
                           for c, v in obj["api_freq"][str(lb)].items()} for lb in LABELS},
            spurious_vars={lb: list(obj["spurious_vars"][str(lb)]) for lb in LABELS},
            spurious_apis={lb: list(obj["spurious_apis"][str(lb)]) for lb in LABELS},
            count_mode=obj.get("count_mode", "occurrences"),
            skipped=obj.get("skipped", 0),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SpuriousLexicon":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def ranked(counts: dict[str, int]) -> list[str]:
    """Names by descending count, ties lexicographically ascending."""
    return sorted(counts, key=lambda k: (-counts[k], k))


def variable_occurrences(facts: CodeFacts) -> Counter:
    return Counter(facts.tokens[i].text for i in facts.variable_sites)


def build_lexicon(train: Corpus, count_mode: str = "occurrences") -> SpuriousLexicon:
    if count_mode not in COUNT_MODES:
        raise ValueError(f"count_mode must be one of {COUNT_MODES}")
    var_freq = {lb: Counter() for lb in LABELS}
    api_count = {lb: Counter() for lb in LABELS}
    api_snips: dict[int, dict[str, list[str]]] = {lb: {} for lb in LABELS}
    skipped = 0
    for s in train:
        try:
            facts = analyze(s.source)
        except (LexError, AnalysisError):
            skipped += 1
            continue
        occ = variable_occurrences(facts)
        calls = Counter(facts.callee_names)
        if count_mode == "documents":
            occ = Counter(dict.fromkeys(occ, 1))
            calls = Counter(dict.fromkeys(calls, 1))
        var_freq[s.label].update(occ)
        api_count[s.label].update(calls)
        snips = api_snips[s.label]
        for cs in facts.callees:
            lst = snips.setdefault(cs.callee, [])
            if len(lst) < SNIPPET_CAP and cs.snippet not in lst:
                lst.append(cs.snippet)
    if skipped:
        log.warning("build_lexicon: skipped %d unanalyzable samples", skipped)

    spurious_vars = {lb: ranked({k: v for k, v in var_freq[lb].items() if var_freq[1 - lb][k] == 0})
                     for lb in LABELS}
    spurious_apis = {lb: ranked({k: v for k, v in api_count[lb].items() if api_count[1 - lb][k] == 0})
                     for lb in LABELS}
    return SpuriousLexicon(
        var_freq={lb: {k: var_freq[lb][k] for k in sorted(var_freq[lb])} for lb in LABELS},
        api_freq={lb: {c: (api_count[lb][c], api_snips[lb][c]) for c in sorted(api_count[lb])}
                  for lb in LABELS},
        spurious_vars=spurious_vars,
        spurious_apis=spurious_apis,
        count_mode=count_mode,
        skipped=skipped,
    )


def topk_spurious_vars(lex: SpuriousLexicon, label: int, k: int) -> list[str]:
    if k < 1:
        raise ValueError("K must be >= 1")
    return lex.spurious_vars[label][:k]


def api_pool(lex: SpuriousLexicon, label: int, mode: str = "top100") -> list[ApiEntry]:
    names = lex.spurious_apis[label]
    if mode == "top100":
        names = names[:100]
    elif mode == "top10pct":
        names = names[:-(-len(names) // 10)]  # ceil(10%) without float error
    else:
        raise ValueError(f"unknown api pool mode {mode!r}")
    return [ApiEntry(c, lex.api_freq[label][c][0], tuple(lex.api_freq[label][c][1])) for c in names]
