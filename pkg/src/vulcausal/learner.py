"""Desk-scale joint model P(Y | R, M) with backdoor-adjusted inference.

R is a mean of hashed-token embeddings over the whole function (or an
imported, frozen vector per sample id). M is a mean of hashed embeddings
over identifier tokens only, passed through `m_depth` tanh layers. The head
is affine -> tanh -> affine -> softmax. Gradients are derived by hand and
everything runs in float64 so runs are bit-reproducible.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .clex import AnalysisError, LexError, analyze, is_significant, tokenize
from .corpus import Corpus, FunctionSample
from .lexicon import SpuriousLexicon, build_lexicon
from .selection import SETTINGS, SelectionError, SelectionIndex, select_companion
from .seeding import derive_rng

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_INFER_SALT = 7919


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    selection: str = "var1"
    select_k: int | None = None
    K: int = 40
    d_r: int = 64
    d_m: int = 32
    v_r: int = 2 ** 16
    v_m: int = 2 ** 14
    hidden: int = 64
    m_depth: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.selection not in SETTINGS:
            raise ValueError(f"selection must be one of {SETTINGS}")
        for name in ("epochs", "batch_size", "K", "d_r", "d_m", "v_r", "v_m", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if not 1 <= self.m_depth <= 4:
            raise ValueError("m_depth must be in 1..4")


# ---------------------------------------------------------------- features

def token_hash(text: str, buckets: int) -> int:
    return zlib.crc32(text.encode("utf-8")) % buckets


@lru_cache(maxsize=65536)
def _r_tokens(source: str) -> tuple[str, ...]:
    return tuple(t.text for t in tokenize(source) if is_significant(t) or t.kind == "preprocessor")


@lru_cache(maxsize=65536)
def _m_tokens(source: str) -> tuple[str, ...]:
    """Identifier tokens in variable or callee position."""
    try:
        f = analyze(source)
    except (LexError, AnalysisError):
        return tuple(t.text for t in tokenize(source) if t.kind == "identifier")
    keep = set(f.variable_sites)
    starts = {c.start for c in f.callees}
    return tuple(t.text for i, t in enumerate(f.tokens)
                 if t.kind == "identifier" and (i in keep or t.start in starts))


def r_ids(source: str, buckets: int) -> np.ndarray:
    return np.array([token_hash(t, buckets) for t in _r_tokens(source)], dtype=np.int64)


def m_ids(source: str, buckets: int) -> np.ndarray:
    return np.array([token_hash(t, buckets) for t in _m_tokens(source)], dtype=np.int64)


def _pool(table: np.ndarray, groups: list[np.ndarray]) -> np.ndarray:
    out = np.zeros((len(groups), table.shape[1]))
    for i, ids in enumerate(groups):
        if len(ids):
            out[i] = table[ids].mean(axis=0)
    return out


def _scatter_mean_grad(grad_table: np.ndarray, groups: list[np.ndarray], g: np.ndarray) -> None:
    lens = np.array([len(ids) for ids in groups])
    nz = lens > 0
    if not nz.any():
        return
    ids = np.concatenate([groups[i] for i in np.flatnonzero(nz)])
    rows = np.repeat(g[nz] / lens[nz, None], lens[nz], axis=0)
    np.add.at(grad_table, ids, rows)


# ------------------------------------------------------------------ models

class _Model:
    kind = "base"
    uses_m = False

    def __init__(self, config: TrainConfig, params: dict[str, np.ndarray] | None = None,
                 imported: dict[int, np.ndarray] | None = None):
        self.config = config
        self.imported = imported
        if imported:
            dims = {len(v) for v in imported.values()}
            if dims != {config.d_r}:
                raise ValueError(f"imported vectors have dimension {sorted(dims)}, config d_r={config.d_r}")
        self.params = params if params is not None else self._init_params()

    @property
    def frozen_r(self) -> bool:
        return self.imported is not None

    def _init_params(self) -> dict[str, np.ndarray]:
        c = self.config
        rng = derive_rng(c.seed, 0, 1)
        p = {}
        if self.imported is None:
            p["E_r"] = np.zeros((c.v_r, c.d_r))
        d_in = c.d_r
        if self.uses_m:
            p["E_m"] = np.zeros((c.v_m, c.d_m))
            for l in range(c.m_depth):
                p[f"Wm{l}"] = rng.normal(0, 1 / math.sqrt(c.d_m), (c.d_m, c.d_m))
                p[f"bm{l}"] = np.zeros(c.d_m)
            d_in += c.d_m
        p["W1"] = rng.normal(0, 1 / math.sqrt(d_in), (c.hidden, d_in))
        p["b1"] = np.zeros(c.hidden)
        p["W2"] = rng.normal(0, 1 / math.sqrt(c.hidden), (2, c.hidden))
        p["b2"] = np.zeros(2)
        return p

    # encoders
    def r_groups(self, samples) -> list[np.ndarray]:
        return [r_ids(s.source, self.config.v_r) for s in samples]

    def encode_r_batch(self, samples) -> np.ndarray:
        if self.imported is not None:
            try:
                return np.stack([self.imported[s.id] for s in samples])
            except KeyError as e:
                raise KeyError(f"no imported representation for sample id {e.args[0]}") from None
        return _pool(self.params["E_r"], self.r_groups(samples))

    def encode_r(self, x: FunctionSample) -> np.ndarray:
        return self.encode_r_batch([x])[0]

    def m_forward(self, e: np.ndarray, present: np.ndarray):
        """Layer activations; rows of samples without identifiers end as zero vectors."""
        hs = [e]
        for l in range(self.config.m_depth):
            hs.append(np.tanh(hs[-1] @ self.params[f"Wm{l}"].T + self.params[f"bm{l}"]))
        hs.append(hs[-1] * present[:, None])
        return hs

    def encode_m_batch(self, samples) -> np.ndarray:
        groups = [m_ids(s.source, self.config.v_m) for s in samples]
        present = np.array([len(g) > 0 for g in groups], dtype=float)
        return self.m_forward(_pool(self.params["E_m"], groups), present)[-1]

    def encode_m(self, x: FunctionSample) -> np.ndarray:
        return self.encode_m_batch([x])[0]

    def head(self, z: np.ndarray):
        a = np.tanh(z @ self.params["W1"].T + self.params["b1"])
        logits = a @ self.params["W2"].T + self.params["b2"]
        return a, softmax(logits)

    # serialization
    def to_dict(self) -> dict:
        p = self.params
        d = {
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "config": asdict(self.config),
            "encoder_r": None if self.frozen_r else p["E_r"].tolist(),
            "head": {k: p[k].tolist() for k in ("W1", "b1", "W2", "b2")},
        }
        if self.uses_m:
            d["encoder_m"] = {
                "embedding": p["E_m"].tolist(),
                "layers": [{"W": p[f"Wm{l}"].tolist(), "b": p[f"bm{l}"].tolist()}
                           for l in range(self.config.m_depth)],
            }
        if self.imported is not None:
            d["imported"] = [[k, self.imported[k].tolist()] for k in sorted(self.imported)]
        return d

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")), encoding="utf-8")

    def copy(self):
        return copy.deepcopy(self)


class VanillaModel(_Model):
    """R encoder + head: P(Y | R)."""
    kind = "vanilla"

    def forward(self, samples) -> np.ndarray:
        return self.head(self.encode_r_batch(samples))[1]


class CausalModel(_Model):
    """R encoder, M encoder and joint head: P(Y | R, M)."""
    kind = "causal"
    uses_m = True

    def forward(self, samples, companions) -> np.ndarray:
        z = np.concatenate([self.encode_r_batch(samples), self.encode_m_batch(companions)], axis=1)
        return self.head(z)[1]


def load_model(path: str | Path) -> VanillaModel | CausalModel:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
    cfg = TrainConfig(**d["config"])
    p = {k: np.array(v, dtype=np.float64) for k, v in d["head"].items()}
    imported = None
    if d["encoder_r"] is None:
        imported = {int(k): np.array(v, dtype=np.float64) for k, v in d["imported"]}
    else:
        p["E_r"] = np.array(d["encoder_r"], dtype=np.float64).reshape(cfg.v_r, cfg.d_r)
    cls = CausalModel if d["kind"] == "causal" else VanillaModel
    if cls is CausalModel:
        p["E_m"] = np.array(d["encoder_m"]["embedding"], dtype=np.float64).reshape(cfg.v_m, cfg.d_m)
        for l, layer in enumerate(d["encoder_m"]["layers"]):
            p[f"Wm{l}"] = np.array(layer["W"], dtype=np.float64)
            p[f"bm{l}"] = np.array(layer["b"], dtype=np.float64)
    return cls(cfg, p, imported)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ------------------------------------------------------------ loss + grads

def loss_and_grads(model: _Model, samples, labels, companions=None):
    """Mean cross-entropy over the batch and its gradient for every trainable parameter."""
    p = model.params
    y = np.asarray(labels)
    B = len(samples)
    r_groups = None if model.frozen_r else model.r_groups(samples)
    r = model.encode_r_batch(samples)
    parts = [r]
    if model.uses_m:
        m_groups = [m_ids(s.source, model.config.v_m) for s in companions]
        present = np.array([len(g) > 0 for g in m_groups], dtype=float)
        hs = model.m_forward(_pool(p["E_m"], m_groups), present)
        parts.append(hs[-1])
    z = np.concatenate(parts, axis=1)
    a, probs = model.head(z)
    loss = -np.mean(np.log(probs[np.arange(B), y]))

    g = {}
    dlog = probs.copy()
    dlog[np.arange(B), y] -= 1.0
    dlog /= B
    g["W2"] = dlog.T @ a
    g["b2"] = dlog.sum(axis=0)
    dpre = (dlog @ p["W2"]) * (1.0 - a ** 2)
    g["W1"] = dpre.T @ z
    g["b1"] = dpre.sum(axis=0)
    dz = dpre @ p["W1"]
    d_r = model.config.d_r
    if not model.frozen_r:
        g["E_r"] = np.zeros_like(p["E_r"])
        _scatter_mean_grad(g["E_r"], r_groups, dz[:, :d_r])
    if model.uses_m:
        dh = dz[:, d_r:] * present[:, None]
        for l in reversed(range(model.config.m_depth)):
            dpre_m = dh * (1.0 - hs[l + 1] ** 2)
            g[f"Wm{l}"] = dpre_m.T @ hs[l]
            g[f"bm{l}"] = dpre_m.sum(axis=0)
            dh = dpre_m @ p[f"Wm{l}"]
        g["E_m"] = np.zeros_like(p["E_m"])
        _scatter_mean_grad(g["E_m"], m_groups, dh)
    return loss, g


class Adam:
    """Adam whose embedding-table updates touch only rows that have ever had a gradient.

    Rows with zero moments and zero gradient receive an exactly zero update,
    so skipping them is identical to the dense update.
    """

    def __init__(self, params: dict[str, np.ndarray], lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.active = {k: np.zeros(v.shape[0], dtype=bool) for k, v in params.items() if k.startswith("E_")}

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, gk in grads.items():
            if k in self.active:
                self.active[k] |= np.any(gk != 0, axis=1)
                rows = np.flatnonzero(self.active[k])
                gk = gk[rows]
                m = self.m[k][rows] = self.b1 * self.m[k][rows] + (1 - self.b1) * gk
                v = self.v[k][rows] = self.b2 * self.v[k][rows] + (1 - self.b2) * gk ** 2
                params[k][rows] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            else:
                self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * gk
                self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * gk ** 2
                params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# --------------------------------------------------------------- training

@dataclass
class TrainLog:
    step0_loss: float | None = None
    epoch_loss: list[float] = field(default_factory=list)
    valid_f1: list[float] = field(default_factory=list)
    best_epoch: int = -1
    skipped: int = 0
    pairs: list[tuple[int, int]] = field(default_factory=list)


def _f1(preds, labels) -> float:
    from .metrics import f1_score
    return f1_score(preds, labels)[2] if len(labels) else 0.0


def _fit(model, train: Corpus, valid: Corpus, cfg: TrainConfig, make_batch, evaluate, log_pairs=False):
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    tlog = TrainLog()
    best, best_f1 = model.copy(), -1.0
    n = len(train)
    for epoch in range(cfg.epochs):
        order = derive_rng(cfg.seed, 1, epoch).permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            batch = [train[int(i)] for i in order[start:start + cfg.batch_size]]
            xs, ys, comps = make_batch(batch, epoch, tlog)
            if not xs:
                continue
            loss, grads = loss_and_grads(model, xs, ys, comps)
            if tlog.step0_loss is None:
                tlog.step0_loss = float(loss)
            opt.step(model.params, grads)
            losses.append(float(loss))
        tlog.epoch_loss.append(float(np.mean(losses)) if losses else float("nan"))
        f1 = evaluate(model) if len(valid) else 0.0
        tlog.valid_f1.append(f1)
        log.info("epoch %d loss %.4f valid f1 %.4f", epoch, tlog.epoch_loss[-1], f1)
        if f1 > best_f1:
            best, best_f1, tlog.best_epoch = model.copy(), f1, epoch
    return best, tlog


def train_vanilla(train: Corpus, valid: Corpus, cfg: TrainConfig,
                  imported: dict[int, np.ndarray] | None = None):
    model = VanillaModel(cfg, imported=imported)

    def make_batch(batch, epoch, tlog):
        return batch, [s.label for s in batch], None

    def evaluate(m):
        preds = [int(p[1] > 0.5) for p in m.forward(list(valid))]
        return _f1(preds, valid.labels)

    return _fit(model, train, valid, cfg, make_batch, evaluate)


def train_causal(train: Corpus, valid: Corpus, cfg: TrainConfig, lex: SpuriousLexicon | None = None,
                 idx: SelectionIndex | None = None, imported: dict[int, np.ndarray] | None = None,
                 record_pairs: bool = False):
    """Fit P(Y | R, M) on (x, x') pairs; x' comes from the configured selection setting."""
    lex = lex or build_lexicon(train)
    idx = idx or SelectionIndex(train, lex)
    model = CausalModel(cfg, imported=imported)

    def make_batch(batch, epoch, tlog):
        xs, ys, comps = [], [], []
        for x in batch:
            try:
                c = select_companion(cfg.selection, x, idx, derive_rng(cfg.seed, 2, epoch, x.id), cfg.select_k)
            except (SelectionError, LexError, AnalysisError):
                tlog.skipped += 1
                continue
            xs.append(x)
            ys.append(x.label)
            comps.append(c.sample)
            if record_pairs and epoch == 0:
                tlog.pairs.append((x.id, c.base_id))
        return xs, ys, comps

    def evaluate(m):
        res = predict_causal(m, valid, train, cfg.K, cfg.seed)
        return _f1([r[1] for r in res], valid.labels)

    best, tlog = _fit(model, train, valid, cfg, make_batch, evaluate)
    if tlog.skipped:
        log.warning("train_causal: skipped %d (sample, epoch) selections", tlog.skipped)
    return best, tlog


# --------------------------------------------------------------- inference

def infer_vanilla(model: VanillaModel, x: FunctionSample) -> tuple[float, int]:
    p = float(model.forward([x])[0, 1])
    return p, int(p > 0.5)


def _marginal(model: CausalModel, r: np.ndarray, m_rows: np.ndarray):
    z = np.concatenate([np.repeat(r[None, :], len(m_rows), axis=0), m_rows], axis=1)
    per = model.head(z)[1][:, 1]
    p = float(np.sum(per * (1.0 / len(per))))
    return p, int(p > 0.5), [float(v) for v in per]


def infer_causal(model: CausalModel, x: FunctionSample, train: Corpus, K: int,
                 rng: np.random.Generator, xprime_self: bool = False):
    """P(Y=1 | do(X=x)) as the uniform average of P(Y=1 | r, M_x') over K draws of x'.

    With `xprime_self` the single companion is x itself (no marginalization).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    r = model.encode_r(x)
    if xprime_self:
        return _marginal(model, r, model.encode_m_batch([x]))
    if len(train) == 0:
        raise ValueError("empty training corpus")
    picks = rng.integers(0, len(train), size=K)
    return _marginal(model, r, model.encode_m_batch([train[int(i)] for i in picks]))


def predict_causal(model: CausalModel, samples, train: Corpus, K: int, seed: int,
                   xprime_self: bool = False):
    """Batched infer_causal with per-sample RNG streams; M of the train set is computed once."""
    if not xprime_self and len(train) == 0:
        raise ValueError("empty training corpus")
    samples = list(samples)
    R = model.encode_r_batch(samples)
    if xprime_self:
        Mx = model.encode_m_batch(samples)
        return [_marginal(model, R[i], Mx[i:i + 1]) for i in range(len(samples))]
    M = model.encode_m_batch(list(train))
    out = []
    for i, x in enumerate(samples):
        picks = derive_rng(seed, _INFER_SALT, x.id).integers(0, len(train), size=K)
        out.append(_marginal(model, R[i], M[picks]))
    return out


def predict(model, samples, train: Corpus | None = None, K: int = 40, seed: int = 0,
            xprime_self: bool = False) -> list[tuple[float, int]]:
    samples = list(samples)
    if isinstance(model, CausalModel):
        return [(p, y) for p, y, _ in predict_causal(model, samples, train, K, seed, xprime_self)]
    probs = model.forward(samples)[:, 1] if samples else []
    return [(float(p), int(p > 0.5)) for p in probs]


def import_representations(path: str | Path) -> dict[int, np.ndarray]:
    table: dict[int, np.ndarray] = {}
    dim = None
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            vec = np.array(obj["vec"], dtype=np.float64)
            if vec.ndim != 1:
                raise ValueError(f"line {lineno}: 'vec' must be a flat list")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"line {lineno}: non-finite value in vector")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"line {lineno}: ragged vector length {len(vec)} != {dim}")
            table[int(obj["idx"])] = vec
    return table
