"""Value head of the classification variant: value attention, value-aware pooling, multi-label sigmoid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .encoder import BatchEncoding, EncoderOutput
from .numkit import Tensor

THRESHOLD = 0.5


@dataclass
class ValueHead:
    W_v: Tensor  # (N_value, d_a)
    W_out: Tensor  # (N_value, d_a)
    b_out: Tensor  # (N_value,)

    @classmethod
    def from_registry(cls, params: nk.ModelParams) -> "ValueHead":
        return cls(params["value_head.W_v"], params["value_head.W_out"], params["value_head.b_out"])


def value_attention_batch(enc: BatchEncoding, head: ValueHead):
    """Per-value softmax over token positions and the mean of the attended token representations.

    Returns Attn (B, N_value, L) and P_valueaware (B, d_a).
    """
    B = enc.ids.shape[0]
    n_value, d = head.W_v.shape
    queries = nk.mul(nk.reshape(head.W_v, (1, n_value, d)), np.ones((B, 1, 1)))
    logits = nk.matmul(queries, nk.transpose(enc.H, (0, 2, 1)))
    attn = nk.softmax(logits, axis=-1, mask=enc.mask[:, None, :])
    pooled = nk.mean(nk.matmul(attn, enc.H), axis=1)
    return attn, pooled


def value_attention(enc: EncoderOutput, head: ValueHead):
    attn, pooled = value_attention_batch(enc.as_batch(), head)
    return attn[0], pooled[0]


def classify_values(p_valueaware, head: ValueHead) -> Tensor:
    """sigmoid(W_out p + b_out): independent per-value probabilities."""
    return nk.sigmoid(nk.linear(p_valueaware, head.W_out, head.b_out))


def predicted_values(probs: np.ndarray, threshold: float = THRESHOLD) -> list[int]:
    return [int(v) for v in np.flatnonzero(np.asarray(probs) > threshold)]


def value_bce_loss(y_pred, y_gold) -> Tensor:
    y = np.asarray(y_gold)
    if not np.isin(y, (0, 1)).all():
        raise nk.ContractError("gold value indicators must be 0/1")
    return nk.binary_cross_entropy(y_pred, y)
