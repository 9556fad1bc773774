"""Exist/none classifier per attribute, fed by the first-step attention context."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .numkit import Tensor

EXIST, NONE = 0, 1


@dataclass
class AttributeDecision:
    attribute: int
    probabilities: np.ndarray  # (exist, none)
    label: np.ndarray | None = None

    @property
    def exists(self) -> bool:
        return int(np.argmax(self.probabilities)) == EXIST


def attribute_probs(contexts, params: nk.ModelParams) -> Tensor:
    """softmax(W_attr c) over the trailing axis of (..., d_a) contexts -> (..., 2)."""
    return nk.softmax(nk.linear(contexts, params["attr_predictor.W"]), axis=-1)


def predict_attribute(context, params: nk.ModelParams, attribute: int = 0) -> AttributeDecision:
    with nk.no_grad():
        c = nk.reshape(nk.as_tensor(context), (1, -1))
        probs = attribute_probs(c, params).data[0]
    return AttributeDecision(attribute, probs)


def attribute_loss(probs: Tensor, gold_classes) -> Tensor:
    """Summed cross entropy; ``gold_classes`` holds EXIST/NONE per attribute (same leading shape)."""
    return nk.reduce_sum(nk.cross_entropy(probs, np.asarray(gold_classes)))


def decisions_loss(decisions: list[AttributeDecision], gold_onehot) -> float:
    """Plain-array form over AttributeDecision records."""
    gold = np.asarray(gold_onehot, dtype=float)
    if len(decisions) != len(gold):
        raise nk.ContractError("one decision per attribute required")
    probs = np.stack([d.probabilities for d in decisions])
    picked = np.sum(probs * gold, axis=1)
    return float(-np.sum(np.log(np.maximum(picked, nk.LOG_FLOOR))))
