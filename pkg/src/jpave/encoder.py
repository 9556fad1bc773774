"""Embedding layer plus bidirectional GRU text encoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numkit as nk
from .numkit import ContractError, GruCellParams, Tensor


@dataclass
class EncoderOutput:
    """Single-instance view: ``H_enc`` is (L, d_a), ``e_L`` is (d_a,)."""

    H_enc: Tensor
    e_L: Tensor
    token_ids: np.ndarray

    def as_batch(self) -> "BatchEncoding":
        L = self.H_enc.shape[0]
        return BatchEncoding(
            nk.reshape(self.H_enc, (1, L, -1)),
            nk.reshape(self.e_L, (1, -1)),
            np.asarray(self.token_ids, dtype=np.int64)[None, :],
            np.ones((1, L), dtype=bool),
            np.array([L]),
        )


@dataclass
class BatchEncoding:
    """Padded batch view. Rows of ``H`` past an instance's length are junk and masked out downstream."""

    H: Tensor  # (B, L, d_a)
    e_L: Tensor  # (B, d_a)
    ids: np.ndarray  # (B, L), [PAD]=0 past each length
    mask: np.ndarray  # (B, L) bool
    lengths: np.ndarray  # (B,)

    def instance(self, b: int) -> EncoderOutput:
        n = int(self.lengths[b])
        return EncoderOutput(self.H[b, :n], self.e_L[b], self.ids[b, :n])


def pad_batch(seqs: Sequence[Sequence[int]], vocab_size: int, l_max: int | None = None):
    if not seqs:
        raise ContractError("empty batch")
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if lengths.min() < 1:
        raise ContractError("every input sequence needs at least one token")
    if l_max is not None and lengths.max() > l_max:
        raise ContractError(f"sequence of length {lengths.max()} exceeds L_max={l_max}")
    width = int(lengths.max())
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = s
    if ids.min() < 0 or ids.max() >= vocab_size:
        raise ContractError(f"token id out of range [0, {vocab_size})")
    mask = np.arange(width)[None, :] < lengths[:, None]
    return ids, mask, lengths


def run_gru(X: Tensor, mask: np.ndarray, p: GruCellParams, h0: Tensor | None = None):
    """Left-to-right GRU over (B, L, in) inputs; padded steps carry the state through unchanged.

    Returns the stacked states (B, L, hidden) and the state after each row's last valid step.
    """
    B, L = mask.shape
    xz = nk.linear(X, p.W_z, p.b_z)
    xr = nk.linear(X, p.W_r, p.b_r)
    xh = nk.linear(X, p.W_h, p.b_h)
    h = h0 if h0 is not None else Tensor(np.zeros((B, p.hidden_size)))
    states = []
    for t in range(L):
        h_new = nk.gru_step_projected(xz[:, t], xr[:, t], xh[:, t], h, p)
        if mask[:, t].all():
            h = h_new
        else:
            m = mask[:, t, None].astype(float)
            h = h_new * m + h * (1.0 - m)
        states.append(nk.reshape(h, (B, 1, p.hidden_size)))
    return nk.concat(states, axis=1), h


def encode_batch(seqs: Sequence[Sequence[int]], params: nk.ModelParams, l_max: int | None = None) -> BatchEncoding:
    E = params["embedding.E"]
    ids, mask, lengths = pad_batch(seqs, E.shape[0], l_max)
    B, L = ids.shape
    pos = np.arange(L)[None, :]
    # per-row reversal of the valid prefix; padding stays at the end
    rev = np.where(mask, lengths[:, None] - 1 - pos, pos)
    rev_ids = np.take_along_axis(ids, rev, axis=1)

    fwd_p = GruCellParams.from_registry(params, "encoder.gru_fwd")
    bwd_p = GruCellParams.from_registry(params, "encoder.gru_bwd")
    fwd_states, fwd_last = run_gru(nk.gather(E, ids), mask, fwd_p)
    bwd_rev_states, bwd_last = run_gru(nk.gather(E, rev_ids), mask, bwd_p)
    bwd_states = nk.take_along(bwd_rev_states, rev[:, :, None], axis=1)

    H = nk.concat([fwd_states, bwd_states], axis=2)
    e_L = nk.concat([fwd_last, bwd_last], axis=1)
    return BatchEncoding(H, e_L, ids, mask, lengths)


def encode(token_ids: Sequence[int], params: nk.ModelParams, l_max: int | None = None) -> EncoderOutput:
    """Bi-GRU over one sequence: row t of H_enc is [forward_t; backward_t], e_L is [forward_last; backward_first]."""
    return encode_batch([list(token_ids)], params, l_max).instance(0)
