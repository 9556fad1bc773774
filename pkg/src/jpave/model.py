"""Model assembly for both variants: parameter layout, batching, losses and prediction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import numkit as nk
from .attribute_predictor import EXIST, NONE, attribute_loss, attribute_probs
from .classifier import ValueHead, classify_values, predicted_values, value_attention_batch, value_bce_loss
from .data import SEP_ID, SPECIAL_TOKENS, DataError, ProductInstance, Schema, Vocab, build_vocab, compose_target, parse_generated
from .encoder import BatchEncoding, encode_batch
from .generator import DecodeTrace, attend, greedy_decode_batch, teacher_forced_nll_batch

GEN, CLS = "gen", "cls"


@dataclass
class Batch:
    instance_ids: list[str]
    token_ids: list[list[int]]
    targets: list[list] | None  # per instance, one TargetSequence per attribute
    attr_gold: np.ndarray  # (B, N_attr) EXIST / NONE
    value_gold: np.ndarray | None  # (B, N_value) 0/1


@dataclass
class Prediction:
    instance_id: str
    attributes: set[str] = field(default_factory=set)
    values: dict[str, list[str]] = field(default_factory=dict)
    traces: list[DecodeTrace] | None = None

    def pairs(self) -> set[tuple[str, str]]:
        return {(a, v) for a, vs in self.values.items() for v in vs}


def model_vocab(splits: Iterable[Iterable[ProductInstance]], schema: Schema, mode: str, min_freq: int = 1) -> Vocab:
    """Token vocabulary over dataset text plus schema strings.

    Covering every split's text mirrors a fixed pretrained vocabulary; labels are not read.
    """
    texts: list[list[str]] = []
    for split in splits:
        texts.extend(inst.tokens for inst in split)
    for a in schema.attributes:
        texts.append(Vocab(mode=mode).tokenize(a))
    for a, v in schema.values:
        texts.append(Vocab(mode=mode).tokenize(v))
    return build_vocab(texts, min_freq=min_freq, mode=mode)


def training_value_space(schema: Schema, train: Iterable[ProductInstance]) -> list[tuple[str, str]]:
    """Classifier label set: schema values that occur in training, in schema order."""
    present = set()
    for inst in train:
        present |= inst.pairs()
    return [v for v in schema.values if v in present]


def _text_embedding(E: np.ndarray, ids: Sequence[int]) -> np.ndarray:
    return E[list(ids)].mean(axis=0)


def init_params(config, vocab: Vocab, schema: Schema, value_space: Sequence[tuple[str, str]],
                rng: np.random.Generator, embeddings: dict | None = None) -> nk.ModelParams:
    """Fresh parameters for ``config.variant``.

    ``embeddings`` may carry ``tokens``/``attributes``/``values`` entries as
    (keys, matrix) pairs loaded from embedding files. Without an attribute (value)
    file, attribute (value) embeddings start from the mean token embedding of the
    attribute name (``attribute [SEP] value`` text) unless the random-init flag is set.
    """
    embeddings = embeddings or {}
    d, s = config.d_a, config.init_scale
    hidden = config.enc_hidden
    params = nk.ModelParams()

    E = rng.uniform(-s, s, (len(vocab), d))
    if "tokens" in embeddings:
        keys, mat = embeddings["tokens"]
        _check_dim(mat, d, "token")
        for k, row in zip(keys, mat):
            if k in vocab and k not in SPECIAL_TOKENS:
                E[vocab.token_to_id[k]] = row
    params.add("embedding.E", E)
    nk.init_gru(params, "encoder.gru_fwd", d, hidden, rng, s)
    nk.init_gru(params, "encoder.gru_bwd", d, hidden, rng, s)

    E_attr = rng.uniform(-s, s, (schema.n_attr, d))
    if not config.rand_attr_emb:
        file_rows = _keyed_rows(embeddings.get("attributes"), d, "attribute")
        for i, a in enumerate(schema.attributes):
            if a in file_rows:
                E_attr[i] = file_rows[a]
            else:
                E_attr[i] = _text_embedding(E, vocab.encode(vocab.tokenize(a)))
    params.add("attr_emb.E_attr", E_attr)
    params.add("attr_predictor.W", rng.uniform(-s, s, (2, d)))

    if config.variant == GEN:
        nk.init_gru(params, "generator.gru", d, d, rng, s)
        params.add("generator.W_cm", rng.uniform(-s, s, (1, 3 * d)))
    else:
        n_value = len(value_space)
        W_v = rng.uniform(-s, s, (n_value, d))
        if not config.rand_value_emb:
            file_rows = _keyed_rows(embeddings.get("values"), d, "value")
            for k, (a, v) in enumerate(value_space):
                key = value_key(a, v)
                if key in file_rows:
                    W_v[k] = file_rows[key]
                else:
                    ids = vocab.encode(vocab.tokenize(a)) + [SEP_ID] + vocab.encode(vocab.tokenize(v))
                    W_v[k] = _text_embedding(E, ids)
        params.add("value_head.W_v", W_v)
        params.add("value_head.W_out", rng.uniform(-s, s, (n_value, d)))
        params.add("value_head.b_out", np.zeros(n_value))
    return params


def value_key(attribute: str, value: str) -> str:
    return f"{attribute} [SEP] {value}"


def _check_dim(mat: np.ndarray, d: int, what: str) -> None:
    if mat.shape[1] != d:
        raise DataError(f"{what} embedding file has dim {mat.shape[1]}, model needs {d}")


def _keyed_rows(entry, d: int, what: str) -> dict:
    if entry is None:
        return {}
    keys, mat = entry
    _check_dim(mat, d, what)
    return dict(zip(keys, mat))


def frozen_names(config) -> set[str]:
    out = set()
    if config.freeze_attr_emb:
        out.add("attr_emb.E_attr")
    if config.freeze_value_emb:
        out.add("value_head.W_v")
    return out


# ---------------------------------------------------------------------------
# batches and losses
# ---------------------------------------------------------------------------


def make_batch(instances: Sequence[ProductInstance], vocab: Vocab, schema: Schema,
               value_space: Sequence[tuple[str, str]], config) -> Batch:
    value_index = {v: k for k, v in enumerate(value_space)}
    ids, targets = [], []
    attr_gold = np.full((len(instances), schema.n_attr), NONE, dtype=np.int64)
    value_gold = np.zeros((len(instances), len(value_space))) if config.variant == CLS else None
    for b, inst in enumerate(instances):
        ids.append(vocab.encode(inst.tokens[: config.l_max]))
        per_attr = []
        for i, a in enumerate(schema.attributes):
            vals = inst.gold.get(a, [])
            if vals:
                attr_gold[b, i] = EXIST
            per_attr.append(compose_target(vals, vocab, config.t_max, attribute=i))
            if value_gold is not None:
                for v in vals:
                    if (a, v) in value_index:
                        value_gold[b, value_index[(a, v)]] = 1.0
        targets.append(per_attr)
    return Batch([inst.id for inst in instances], ids, targets, attr_gold, value_gold)


def attribute_contexts_cls(enc: BatchEncoding, params: nk.ModelParams) -> nk.Tensor:
    """(B, N_attr, d_a) contexts from attention queried by the attribute embeddings."""
    E_attr = params["attr_emb.E_attr"]
    B = enc.ids.shape[0]
    queries = nk.mul(nk.reshape(E_attr, (1,) + E_attr.shape), np.ones((B, 1, 1)))
    _, ctx = attend(queries, enc.H, enc.mask)
    return ctx


def component_losses(batch: Batch, params: nk.ModelParams, config) -> tuple[nk.Tensor, nk.Tensor]:
    """(attribute loss, value loss) summed over the batch."""
    enc = encode_batch(batch.token_ids, params, config.l_max)
    if config.variant == GEN:
        value_loss, ctx, _ = teacher_forced_nll_batch(enc, batch.targets, params, config.no_copy)
    else:
        ctx = attribute_contexts_cls(enc, params)
        head = ValueHead.from_registry(params)
        _, pooled = value_attention_batch(enc, head)
        value_loss = value_bce_loss(classify_values(pooled, head), batch.value_gold)
    attr_loss = attribute_loss(attribute_probs(ctx, params), batch.attr_gold)
    return attr_loss, value_loss


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def predict(params: nk.ModelParams, config, vocab: Vocab, schema: Schema,
            value_space: Sequence[tuple[str, str]], instances: Sequence[ProductInstance],
            batch_size: int | None = None, traces: bool = False) -> list[Prediction]:
    batch_size = batch_size or config.test_batch_size
    out: list[Prediction] = []
    attr_ids = list(range(schema.n_attr))
    with nk.no_grad():
        for start in range(0, len(instances), batch_size):
            chunk = instances[start : start + batch_size]
            enc = encode_batch([vocab.encode(inst.tokens[: config.l_max]) for inst in chunk], params, config.l_max)
            if config.variant == GEN:
                emitted, ctx, tr = greedy_decode_batch(enc, params, attr_ids, config.t_max, config.no_copy, record=traces)
            else:
                ctx_t = attribute_contexts_cls(enc, params)
                ctx = ctx_t.data
                head = ValueHead.from_registry(params)
                _, pooled = value_attention_batch(enc, head)
                probs = classify_values(pooled, head).data
            attr_probs = attribute_probs(nk.Tensor(ctx), params).data
            for b, inst in enumerate(chunk):
                pred = Prediction(inst.id)
                pred.attributes = {a for i, a in enumerate(schema.attributes) if np.argmax(attr_probs[b, i]) == EXIST}
                if config.variant == GEN:
                    for i, a in enumerate(schema.attributes):
                        vals = parse_generated(emitted[b][i], vocab)
                        if vals:
                            pred.values[a] = vals
                    if traces:
                        pred.traces = tr[b]
                else:
                    for k in predicted_values(probs[b], config.threshold):
                        a, v = value_space[k]
                        pred.values.setdefault(a, []).append(v)
                if config.gate_values:
                    pred.values = {a: vs for a, vs in pred.values.items() if a in pred.attributes}
                out.append(pred)
    return out
