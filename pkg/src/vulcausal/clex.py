"""Lossless C lexing plus the lexical facts needed to rewrite a function.

Everything here is token-level. There is no C grammar: variables, callees
and statement boundaries are recovered from local token context, which is
robust on the partial, macro-heavy functions found in vulnerability corpora.
Offsets are indices into the Python string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool _Complex _Imaginary""".split()
)

TYPE_NAMES = frozenset(
    """size_t ssize_t ptrdiff_t off_t intptr_t uintptr_t wchar_t bool FILE
    int8_t int16_t int32_t int64_t uint8_t uint16_t uint32_t uint64_t
    u8 u16 u32 u64 s8 s16 s32 s64 __u8 __u16 __u32 __u64 __s8 __s16 __s32 __s64
    gint guint gchar gboolean gpointer gsize gssize uint ulong ushort uchar
    va_list jmp_buf time_t pid_t uid_t gid_t mode_t dev_t socklen_t""".split()
)

CONSTANT_NAMES = frozenset({"true", "false", "errno", "stdin", "stdout", "stderr"})

KINDS = ("identifier", "keyword", "number", "string", "char", "comment",
         "punctuation", "whitespace", "preprocessor")

_PUNCT = ["%:%:", "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=",
          "==", "!=", "&&", "||", "*=", "/=", "%=", "+=", "-=", "&=", "^=", "|=",
          "##", "::", "<:", ":>", "<%", "%>", "%:"]

_MASTER = re.compile(
    r"""
    (?P<whitespace>\s+)
  | (?P<comment>/\*.*?\*/|//[^\n]*)
  | (?P<string>(?:u8|[LuU])?"(?:\\.|[^"\\\n])*")
  | (?P<char>(?:u8|[LuU])?'(?:\\.|[^'\\\n])*')
  | (?P<number>\.?[0-9](?:[eEpP][+-]|[\w.])*)
  | (?P<identifier>[^\W\d]\w*|\$[\w$]*)
  | (?P<punctuation>"""
    + "|".join(re.escape(p) for p in _PUNCT)
    + r"""|.)
    """,
    re.VERBOSE | re.DOTALL,
)

_PP_LINE = re.compile(r"#(?:\\\r?\n|[^\n])*")
_IDENT_RE = re.compile(r"^[^\W\d]\w*$")
_MACRO_RE = re.compile(r"^[A-Z_][A-Z0-9_]+$")
GUARD_RE = re.compile(r"^_i_\d+$")


class LexError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} at offset {offset}")
        self.offset = offset


class AnalysisError(ValueError):
    pass


class RenameError(ValueError):
    def __init__(self, kind: str, msg: str):
        super().__init__(f"{kind}: {msg}")
        self.kind = kind


class Token(NamedTuple):
    kind: str
    text: str
    start: int
    end: int

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


def _at_line_start(text: str, pos: int) -> bool:
    i = pos - 1
    while i >= 0 and text[i] in " \t\f\v":
        i -= 1
    return i < 0 or text[i] in "\r\n"


def tokenize(source: str) -> list[Token]:
    """Split `source` into tokens whose texts concatenate back to `source`."""
    tokens = []
    pos, n = 0, len(source)
    while pos < n:
        ch = source[pos]
        if ch == "#" and _at_line_start(source, pos):
            m = _PP_LINE.match(source, pos)
            tokens.append(Token("preprocessor", m.group(), pos, m.end()))
            pos = m.end()
            continue
        m = _MASTER.match(source, pos)
        kind = m.lastgroup
        if kind == "punctuation":
            if source.startswith("/*", pos):
                raise LexError("unterminated comment", pos)
            if ch in "\"'":
                raise LexError("unterminated literal", pos)
        text = m.group()
        if kind == "identifier" and text in KEYWORDS:
            kind = "keyword"
        tokens.append(Token(kind, text, pos, m.end()))
        pos = m.end()
    return tokens


def untokenize(tokens: Sequence[Token]) -> str:
    return "".join(t.text for t in tokens)


def is_significant(tok: Token) -> bool:
    return tok.kind not in ("whitespace", "comment", "preprocessor")


@dataclass(frozen=True)
class CallSite:
    callee: str
    snippet: str
    start: int = 0


@dataclass
class CodeFacts:
    tokens: list[Token]
    name: str
    variables: set[str]
    callees: list[CallSite]
    insertion_points: list[int]
    body_span: tuple[int, int]
    # token indices whose text is a variable in variable position
    variable_sites: list[int] = field(default_factory=list)

    @property
    def callee_names(self) -> list[str]:
        return [c.callee for c in self.callees]

    def identifiers(self) -> set[str]:
        return {t.text for t in self.tokens if t.kind == "identifier"}


def _match_brackets(tokens: Sequence[Token], sig: list[int]) -> dict[int, int]:
    pairs = {}
    stack = []
    closers = {")": "(", "]": "[", "}": "{"}
    for i in sig:
        t = tokens[i].text
        if t in ("(", "[", "{"):
            stack.append(i)
        elif t in closers:
            if not stack or tokens[stack[-1]].text != closers[t]:
                raise AnalysisError(f"unbalanced {t!r} at offset {tokens[i].start}")
            j = stack.pop()
            pairs[j] = i
            pairs[i] = j
    if stack:
        raise AnalysisError(f"unclosed {tokens[stack[-1]].text!r} at offset {tokens[stack[-1]].start}")
    return pairs


def _find_function(tokens, sig, pairs):
    kpos = {i: k for k, i in enumerate(sig)}
    depth = 0
    for k, i in enumerate(sig):
        t = tokens[i]
        if t.text in ("{", "(", "["):
            if depth == 0 and t.text == "(" and k > 0 and tokens[sig[k - 1]].kind == "identifier":
                close = pairs[i]
                pos = kpos[close]
                if pos + 1 < len(sig) and tokens[sig[pos + 1]].text == "{":
                    return sig[k - 1], i, close, sig[pos + 1]
            depth += 1
        elif t.text in ("}", ")", "]"):
            depth -= 1
    raise AnalysisError("no function body found")


def _param_names(tokens, sig_params: list[int]) -> list[int]:
    """Token indices of the declared parameter names."""
    segments, cur, depth = [], [], 0
    for i in sig_params:
        t = tokens[i].text
        if t in ("(", "["):
            depth += 1
        elif t in (")", "]"):
            depth -= 1
        if t == "," and depth == 0:
            segments.append(cur)
            cur = []
        else:
            cur.append(i)
    if cur:
        segments.append(cur)
    names = []
    for seg in segments:
        texts = [tokens[i].text for i in seg]
        for a in range(len(seg) - 2):
            # function-pointer parameter: ( * name )
            if texts[a] == "(" and texts[a + 1] == "*" and tokens[seg[a + 2]].kind == "identifier":
                names.append(seg[a + 2])
                break
        else:
            depth = 0
            words = []
            for i in seg:
                t = tokens[i]
                if t.text in ("(", "["):
                    depth += 1
                elif t.text in (")", "]"):
                    depth -= 1
                elif depth == 0 and (t.kind == "identifier" or
                                     (t.kind == "keyword" and t.text not in _QUALIFIERS)):
                    words.append(i)
            # a lone word ("void", "size_t") is an unnamed parameter
            if len(words) >= 2 and tokens[words[-1]].kind == "identifier":
                names.append(words[-1])
    return names


_QUALIFIERS = {"const", "volatile", "restrict", "register"}
_STMT_START = {";", "{", "}", "(", ",", None}
_BLOCK_OPENERS = {")", "else", "do", "{", ";", "}", ":"}
_NO_POINT_BEFORE = {"else", "while"}


def _is_type_context(tokens, sig, k) -> bool:
    """Whether the identifier at sig position k names a type."""
    t = tokens[sig[k]].text
    if t in TYPE_NAMES or (t.endswith("_t") and len(t) > 2):
        return True
    prev = tokens[sig[k - 1]].text if k > 0 else None
    if prev in ("struct", "union", "enum"):
        return True
    nxt = sig[k + 1] if k + 1 < len(sig) else None
    if nxt is None:
        return False
    nt = tokens[nxt]
    if nt.kind == "identifier" or nt.text in ("const", "volatile", "restrict"):
        return True
    if nt.text == "*":
        j = k + 1
        while j < len(sig) and tokens[sig[j]].text in ("*", "const", "restrict", "volatile"):
            j += 1
        if j >= len(sig):
            return False
        after = tokens[sig[j]]
        if prev == "(" and after.text == ")":
            return True  # cast: (T *)
        follow = tokens[sig[j + 1]].text if j + 1 < len(sig) else None
        if prev in ("(", ",") and after.kind == "identifier":
            return follow == "="
        if (prev in _STMT_START or (prev is not None and tokens[sig[k - 1]].kind == "keyword"
                                    and prev not in ("return", "sizeof", "case", "goto"))) \
                and after.kind == "identifier":
            j2 = j + 1
            if j2 < len(sig) and tokens[sig[j2]].text in ("=", ";", ",", ")", "["):
                return True
    return False


def analyze(source: str) -> CodeFacts:
    """Lexical facts of the first function definition in `source`."""
    tokens = tokenize(source)
    sig = [i for i, t in enumerate(tokens) if is_significant(t)]
    pairs = _match_brackets(tokens, sig)
    name_i, lp, rp, body_open = _find_function(tokens, sig, pairs)
    body_close = pairs[body_open]
    fname = tokens[name_i].text

    kpos = {i: k for k, i in enumerate(sig)}
    param_sites = _param_names(tokens, [i for i in sig if lp < i < rp])
    variables = {tokens[i].text for i in param_sites}
    var_sites = list(param_sites)

    callees: list[CallSite] = []
    kb, ke = kpos[body_open], kpos[body_close]
    for k in range(kb + 1, ke):
        i = sig[k]
        tok = tokens[i]
        if tok.kind != "identifier":
            continue
        prev = tokens[sig[k - 1]].text
        nxt = tokens[sig[k + 1]].text if k + 1 < len(sig) else None
        if prev in (".", "->", "goto", "case"):
            continue
        if nxt == "(":
            if tok.text != fname:
                close = pairs[sig[k + 1]]
                callees.append(CallSite(tok.text, source[tok.start:tokens[close].end], tok.start))
            continue
        if nxt == ":" and prev in (";", "{", "}"):
            continue  # goto label
        if _is_type_context(tokens, sig, k):
            continue
        if _MACRO_RE.match(tok.text) or tok.text in CONSTANT_NAMES:
            continue
        variables.add(tok.text)
        var_sites.append(i)
    # a variable that is also called (function-pointer parameter) is renamed at its calls too
    starts = {c.start for c in callees if c.callee in variables}
    var_sites.extend(i for i in range(len(tokens)) if tokens[i].start in starts
                     and tokens[i].kind == "identifier")
    var_sites.sort()

    points = _insertion_points(tokens, sig, kpos, pairs, body_open, body_close)
    return CodeFacts(tokens, fname, variables, callees, points,
                     (tokens[body_open].start, tokens[body_close].end), var_sites)


def _insertion_points(tokens, sig, kpos, pairs, body_open, body_close) -> list[int]:
    points = [tokens[body_open].end]
    kb, ke = kpos[body_open], kpos[body_close]
    depth, paren = 1, 0
    statement_block = {body_open: True}
    for k in range(kb + 1, ke):
        i = sig[k]
        t = tokens[i].text
        nxt = tokens[sig[k + 1]] if k + 1 < len(sig) else None
        if t == "{":
            prev = tokens[sig[k - 1]]
            statement_block[i] = paren == 0 and (prev.text in _BLOCK_OPENERS)
            depth += 1
        elif t == "}":
            depth -= 1
            if depth == 1 and paren == 0 and statement_block.get(pairs[i], False) \
                    and nxt is not None and nxt.text not in _NO_POINT_BEFORE | {";", ",", ")"}:
                points.append(tokens[i].end)
        elif t in ("(", "["):
            paren += 1
        elif t in (")", "]"):
            paren -= 1
        elif t == ";" and depth == 1 and paren == 0:
            if nxt is None or nxt.text not in _NO_POINT_BEFORE:
                points.append(tokens[i].end)
    return points


def rename_variables(source: str, mapping: dict[str, str], facts: CodeFacts | None = None) -> str:
    """Consistently rename variables; strings, comments, members and calls are untouched."""
    if not mapping:
        return source
    facts = facts or analyze(source)
    unknown = set(mapping) - facts.variables
    if unknown:
        raise RenameError("unknown", f"not variables of the function: {sorted(unknown)}")
    values = list(mapping.values())
    if len(set(values)) != len(values):
        raise RenameError("collision", "mapping is not injective")
    present = facts.identifiers() | _preprocessor_words(facts.tokens)
    for old, new in mapping.items():
        if not _IDENT_RE.match(new) or new in KEYWORDS:
            raise RenameError("invalid", f"{new!r} is not a C identifier")
        if new != old and new in present:
            raise RenameError("capture", f"{new!r} already occurs in the source")
    sites = set(facts.variable_sites)
    out = []
    for i, t in enumerate(facts.tokens):
        if i in sites and t.text in mapping:
            out.append(mapping[t.text])
        else:
            out.append(t.text)
    return "".join(out)


def _preprocessor_words(tokens) -> set[str]:
    words = set()
    for t in tokens:
        if t.kind == "preprocessor":
            words.update(re.findall(r"[^\W\d]\w*", t.text))
    return words


def make_dead_block(calls: Sequence[str], guard_id: int) -> str:
    """An unreachable block: `while (v > v)` never runs its body."""
    if not calls:
        raise ValueError("dead block needs at least one call")
    g = f"_i_{guard_id}"
    body = " ".join(f"{c};" for c in calls)
    return f"int {g} = 0; while ( {g} > {g} ) {{ {body} }}"


def insert_dead_code(source: str, blocks: Sequence[tuple[int, str]],
                     facts: CodeFacts | None = None) -> str:
    """Splice blocks at insertion points; blocks sharing a point keep list order."""
    if not blocks:
        return source
    facts = facts or analyze(source)
    valid = set(facts.insertion_points)
    grouped: dict[int, list[str]] = {}
    for off, text in blocks:
        if off not in valid:
            raise ValueError(f"offset {off} is not an insertion point")
        grouped.setdefault(off, []).append(text)
    out = source
    for off in sorted(grouped, reverse=True):
        out = out[:off] + "".join(grouped[off]) + out[off:]
    return out


def fresh_guard_ids(taken: set[str], start: int, count: int) -> list[int]:
    """`count` consecutive-ish guard ids from `start` whose `_i_<id>` is unused."""
    ids = []
    g = start
    while len(ids) < count:
        if f"_i_{g}" not in taken:
            ids.append(g)
        g += 1
    return ids


def find_dead_blocks(source: str) -> list[tuple[int, int, str]]:
    """Locate `int V = 0; while ( V > V ) { ... }` blocks by token matching.

    Returns (start, end, guard) triples in source order. Only blocks whose
    guard compares the same variable on both sides are reported.
    """
    tokens = tokenize(source)
    sig = [i for i, t in enumerate(tokens) if is_significant(t)]
    texts = [tokens[i].text for i in sig]
    found = []
    k = 0
    while k + 11 < len(sig):
        if texts[k] == "int" and GUARD_RE.match(texts[k + 1]) and texts[k + 2:k + 5] == ["=", "0", ";"] \
                and texts[k + 5:k + 7] == ["while", "("] and texts[k + 8] == ">" \
                and texts[k + 7] == texts[k + 1] == texts[k + 9] and texts[k + 10:k + 12] == [")", "{"]:
            depth = 0
            for j in range(k + 11, len(sig)):
                if texts[j] == "{":
                    depth += 1
                elif texts[j] == "}":
                    depth -= 1
                    if depth == 0:
                        break
            else:
                break
            found.append((tokens[sig[k]].start, tokens[sig[j]].end, texts[k + 1]))
            k = j + 1
        else:
            k += 1
    return found
