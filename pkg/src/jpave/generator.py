"""Per-attribute GRU value generator with generator-encoder attention and a soft-gated copy switch.

Decoder states are laid out as (B, Q, d_a): B instances, Q decoding rows per
instance (one per attribute during training). Attention against the (B, L, d_a)
token representations is then a single batched matmul.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numkit as nk
from .data import EOS_ID, PAD_ID, TargetSequence
from .encoder import BatchEncoding, EncoderOutput
from .numkit import ContractError, GruCellParams, Tensor

T_MAX = 10


@dataclass
class DecodeStep:
    h_dec: np.ndarray
    p_vocab: np.ndarray
    p_input: np.ndarray
    p_gen: float
    context: np.ndarray
    input_embedding: np.ndarray
    p_final: np.ndarray


@dataclass
class DecodeTrace:
    attribute: int
    steps: list[DecodeStep] = field(default_factory=list)
    emitted: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "attribute": self.attribute,
            "ids": [int(i) for i in self.emitted],
            "p_gen": [float(s.p_gen) for s in self.steps],
        })


def attend(query: Tensor, H: Tensor, mask: np.ndarray):
    """Dot-product attention of (B, Q, d) queries over (B, L, d) keys/values.

    Returns the (B, Q, L) distribution over valid positions and the (B, Q, d) context.
    """
    logits = nk.matmul(query, nk.transpose(H, (0, 2, 1)))
    weights = nk.softmax(logits, axis=-1, mask=mask[:, None, :])
    return weights, nk.matmul(weights, H)


def step(x: Tensor, h_prev: Tensor, enc: BatchEncoding, params: nk.ModelParams,
         no_copy: bool = False, gate_override: float | None = None) -> dict:
    """One decoding step for every row. ``gate_override`` pins p_gen (test hook)."""
    gru = GruCellParams.from_registry(params, "generator.gru")
    E = params["embedding.E"]
    h = nk.gru_cell(x, h_prev, gru)
    p_vocab = nk.softmax(nk.matmul(h, nk.transpose(E)), axis=-1)
    p_input, context = attend(h, enc.H, enc.mask)
    out = {"h": h, "p_vocab": p_vocab, "p_input": p_input, "context": context, "x": x}
    if no_copy:
        out["p_gen"] = None
        out["p_final"] = p_vocab
        return out
    if gate_override is None:
        gate_in = nk.concat([h, x, context], axis=-1)
        p_gen = nk.sigmoid(nk.linear(gate_in, params["generator.W_cm"]))
    else:
        p_gen = Tensor(np.full(h.shape[:-1] + (1,), float(gate_override)))
    out["p_gen"] = p_gen
    out["p_final"] = copy_mix(p_vocab, p_input, enc.ids[:, None, :], p_gen)
    return out


def copy_mix(p_vocab, p_input, input_ids, p_gen) -> Tensor:
    """p_gen * p_vocab + (1 - p_gen) * (p_input summed onto the vocabulary ids of the input tokens)."""
    p_input = nk.as_tensor(p_input)
    p_vocab = nk.as_tensor(p_vocab)
    ids = np.broadcast_to(np.asarray(input_ids, dtype=np.int64), p_input.shape)
    p_copy = nk.scatter_add(p_input, ids, p_vocab.shape[-1])
    return p_gen * p_vocab + (1.0 - p_gen) * p_copy


def decode_step(prev_token_embedding, h_prev, enc: EncoderOutput, params: nk.ModelParams,
                no_copy: bool = False, gate_override: float | None = None) -> DecodeStep:
    """Single-row decoding step returning plain arrays."""
    d = enc.H_enc.shape[1]
    x = nk.reshape(nk.as_tensor(prev_token_embedding), (1, 1, d))
    h = nk.reshape(nk.as_tensor(h_prev), (1, 1, d))
    with nk.no_grad():
        out = step(x, h, enc.as_batch(), params, no_copy, gate_override)
    return _to_step(out, 0, 0)


def _to_step(out: dict, b: int, q: int) -> DecodeStep:
    p_gen = 1.0 if out["p_gen"] is None else float(out["p_gen"].data[b, q, 0])
    return DecodeStep(
        h_dec=out["h"].data[b, q].copy(),
        p_vocab=out["p_vocab"].data[b, q].copy(),
        p_input=out["p_input"].data[b, q].copy(),
        p_gen=p_gen,
        context=out["context"].data[b, q].copy(),
        input_embedding=out["x"].data[b, q].copy(),
        p_final=out["p_final"].data[b, q].copy(),
    )


def _initial_inputs(enc: BatchEncoding, attr_ids: np.ndarray, params: nk.ModelParams):
    B = enc.ids.shape[0]
    x = nk.gather(params["attr_emb.E_attr"], np.broadcast_to(attr_ids, (B, len(attr_ids))))
    d = enc.e_L.shape[-1]
    h = nk.mul(nk.reshape(enc.e_L, (B, 1, d)), np.ones((1, len(attr_ids), 1)))
    return x, h


def teacher_forced_nll_batch(enc: BatchEncoding, targets: Sequence[Sequence[TargetSequence]],
                             params: nk.ModelParams, no_copy: bool = False,
                             attribute_order: Sequence[int] | None = None):
    """Summed -log p_final(y) over every target token of every attribute of every instance.

    ``targets[b]`` holds one TargetSequence per attribute. Returns the loss, the
    (B, N_attr, d_a) first-step contexts and the per-(instance, attribute) losses.
    """
    B = len(targets)
    n_attr = len(targets[0])
    order = np.arange(n_attr) if attribute_order is None else np.asarray(attribute_order)
    if sorted(order.tolist()) != list(range(n_attr)):
        raise ContractError("attribute_order must be a permutation of the attribute indices")
    T = max(len(targets[b][a].ids) for b in range(B) for a in range(n_attr))
    Y = np.full((B, n_attr, T), PAD_ID, dtype=np.int64)
    valid = np.zeros((B, n_attr, T), dtype=bool)
    for b in range(B):
        if len(targets[b]) != n_attr:
            raise ContractError("every instance needs one target per attribute")
        for q, a in enumerate(order):
            ids = targets[b][a].ids
            Y[b, q, : len(ids)] = ids
            valid[b, q, : len(ids)] = True

    E = params["embedding.E"]
    x, h = _initial_inputs(enc, order, params)
    row_loss = None
    first_context = None
    for j in range(T):
        out = step(x, h, enc, params, no_copy)
        if j == 0:
            first_context = out["context"]
        nll = nk.cross_entropy(out["p_final"], Y[:, :, j])
        if not valid[:, :, j].all():
            nll = nll * valid[:, :, j].astype(float)
        row_loss = nll if row_loss is None else row_loss + nll
        h = out["h"]
        x = nk.gather(E, Y[:, :, j])
    # undo the processing order so the final reduction is order independent
    inv = np.argsort(order)
    row_loss = row_loss[:, inv]
    first_context = first_context[:, inv]
    return nk.reduce_sum(row_loss), first_context, row_loss


def teacher_forced_nll(targets: Sequence[TargetSequence], enc: EncoderOutput, params: nk.ModelParams,
                       no_copy: bool = False, attribute_order: Sequence[int] | None = None):
    """Single-instance value-generation loss and the per-attribute first-step contexts (N_attr, d_a)."""
    loss, ctx, _ = teacher_forced_nll_batch(enc.as_batch(), [list(targets)], params, no_copy, attribute_order)
    return loss, ctx[0]


def greedy_decode_batch(enc: BatchEncoding, params: nk.ModelParams, attr_ids: Sequence[int],
                        t_max: int = T_MAX, no_copy: bool = False, record: bool = False,
                        gate_override: float | None = None):
    """Greedy argmax decoding of every attribute in ``attr_ids`` for every instance.

    Returns (emitted, first_context, traces): emitted[b][q] is the id list, ending with
    [EOS] when it was produced; traces[b][q] is a DecodeTrace when ``record`` is set.
    """
    attr_ids = np.asarray(attr_ids, dtype=np.int64)
    B, Q = enc.ids.shape[0], len(attr_ids)
    E = params["embedding.E"]
    emitted = [[[] for _ in range(Q)] for _ in range(B)]
    traces = [[DecodeTrace(int(a)) for a in attr_ids] for _ in range(B)] if record else None
    done = np.zeros((B, Q), dtype=bool)
    first_context = None
    with nk.no_grad():
        x, h = _initial_inputs(enc, attr_ids, params)
        for j in range(t_max):
            out = step(x, h, enc, params, no_copy, gate_override)
            if j == 0:
                first_context = out["context"].data
            tok = np.argmax(out["p_final"].data, axis=-1)
            for b in range(B):
                for q in range(Q):
                    if done[b, q]:
                        continue
                    emitted[b][q].append(int(tok[b, q]))
                    if record:
                        s = _to_step(out, b, q)
                        traces[b][q].steps.append(s)
                        traces[b][q].emitted.append(int(tok[b, q]))
            done |= tok == EOS_ID
            if done.all():
                break
            h = out["h"]
            x = nk.gather(E, tok)
    return emitted, first_context, traces


def generate_sequence(attribute_index: int, enc: EncoderOutput, params: nk.ModelParams,
                      t_max: int = T_MAX, no_copy: bool = False, gate_override: float | None = None) -> DecodeTrace:
    n_attr = params["attr_emb.E_attr"].shape[0]
    if not 0 <= attribute_index < n_attr:
        raise ContractError(f"attribute index {attribute_index} outside [0, {n_attr})")
    _, _, traces = greedy_decode_batch(enc.as_batch(), params, [attribute_index], t_max, no_copy,
                                       record=True, gate_override=gate_override)
    return traces[0][0]
