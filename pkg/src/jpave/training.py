"""Joint objectives, Adam, the training loop and early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import numkit as nk
from .data import ProductInstance, Schema, Vocab
from .metrics import EvalReport, evaluate
from .model import CLS, GEN, Batch, component_losses, frozen_names, init_params, make_batch, model_vocab, predict, training_value_space

log = logging.getLogger(__name__)

GEN_FLAGS = ("no_copy", "no_apred", "freeze_attr_emb", "rand_attr_emb")
CLS_FLAGS = ("freeze_value_emb", "rand_value_emb")


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    variant: str = GEN
    l_max: int = 46
    d_a: int = 768
    t_max: int = 10
    batch_size: int = 64
    val_batch_size: int = 16
    test_batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    epochs: int = 30
    patience: int | None = 5
    seed: int = 0
    init_scale: float = 0.08
    no_copy: bool = False
    no_apred: bool = False
    freeze_attr_emb: bool = False
    rand_attr_emb: bool = False
    freeze_value_emb: bool = False
    rand_value_emb: bool = False
    gate_values: bool = False
    threshold: float = 0.5
    tokenize: str = "char"
    min_freq: int = 1

    def __post_init__(self):
        self.validate()

    @property
    def enc_hidden(self) -> int:
        return self.d_a // 2

    def validate(self) -> None:
        if self.variant not in (GEN, CLS):
            raise ConfigError(f"variant must be 'gen' or 'cls', got {self.variant!r}")
        if self.d_a <= 0 or self.d_a % 2:
            raise ConfigError("d_a must be a positive even number (two encoder directions)")
        for name in ("l_max", "t_max", "batch_size", "val_batch_size", "test_batch_size", "min_freq"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0 or self.lr < 0 or self.clip_norm <= 0:
            raise ConfigError("epochs and lr must be non-negative, clip_norm positive")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be positive or null")
        wrong = CLS_FLAGS if self.variant == GEN else GEN_FLAGS
        bad = [f for f in wrong if getattr(self, f)]
        if bad:
            raise ConfigError(f"flags {bad} do not apply to variant {self.variant!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------


def joint_loss_gen(batch: Batch, params: nk.ModelParams, config: TrainConfig) -> nk.Tensor:
    """Attribute cross entropy plus value-generation NLL (value NLL alone under no_apred)."""
    if config.variant != GEN:
        raise ConfigError("joint_loss_gen needs the gen variant")
    attr_loss, value_loss = component_losses(batch, params, config)
    return value_loss if config.no_apred else attr_loss + value_loss


def joint_loss_cls(batch: Batch, params: nk.ModelParams, config: TrainConfig) -> nk.Tensor:
    """Attribute cross entropy plus value BCE."""
    if config.variant != CLS:
        raise ConfigError("joint_loss_cls needs the cls variant")
    attr_loss, value_loss = component_losses(batch, params, config)
    return attr_loss + value_loss


def joint_loss(batch: Batch, params: nk.ModelParams, config: TrainConfig) -> nk.Tensor:
    return (joint_loss_gen if config.variant == GEN else joint_loss_cls)(batch, params, config)


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, params: nk.ModelParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm: float | None = 5.0, frozen: set[str] = frozenset()):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip_norm = clip_norm
        self.frozen = set(frozen)
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}

    def trainable(self):
        return [p for p in self.params if p.name not in self.frozen]

    def grad_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self.trainable()))

    def step(self) -> float:
        norm = self.grad_norm()
        scale = self.clip_norm / norm if self.clip_norm is not None and norm > self.clip_norm else 1.0
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.trainable():
            g = p.grad * scale
            m, v = self.m[p.name], self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return norm


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    checkpoint: "Checkpoint"
    history: list[dict] = field(default_factory=list)
    final_params: nk.ModelParams | None = None


def evaluate_model(params: nk.ModelParams, config: TrainConfig, vocab: Vocab, schema: Schema,
                   value_space, instances: Sequence[ProductInstance], unseen=None,
                   batch_size: int | None = None) -> EvalReport:
    preds = predict(params, config, vocab, schema, value_space, instances, batch_size=batch_size)
    return report_from_predictions(preds, instances, schema, unseen)


def report_from_predictions(preds, instances: Sequence[ProductInstance], schema: Schema, unseen=None) -> EvalReport:
    pred_pairs = {p.instance_id: p.pairs() for p in preds}
    gold_pairs = {inst.id: inst.pairs() for inst in instances}
    pred_attrs = {p.instance_id: set(p.attributes) for p in preds}
    gold_attrs = {inst.id: set(inst.gold) for inst in instances}
    return evaluate(pred_pairs, gold_pairs, schema.attributes, pred_attrs, gold_attrs, unseen)


def _first_bad_instance(batch: Batch, params, config) -> str:
    for k, iid in enumerate(batch.instance_ids):
        single = Batch([iid], [batch.token_ids[k]], [batch.targets[k]], batch.attr_gold[k : k + 1],
                       None if batch.value_gold is None else batch.value_gold[k : k + 1])
        with nk.no_grad():
            if not math.isfinite(joint_loss(single, params, config).item()):
                return iid
    return "<unknown>"


def train(config: TrainConfig, train_set: Sequence[ProductInstance], val_set: Sequence[ProductInstance],
          schema: Schema, vocab: Vocab | None = None, embeddings: dict | None = None) -> TrainResult:
    """Deterministic training run; the returned checkpoint holds the best-validation parameters."""
    from .checkpoint import Checkpoint

    if not train_set:
        raise TrainingError("empty training set")
    for inst in list(train_set) + list(val_set):
        for a in inst.gold:
            if a not in schema.attributes:
                raise TrainingError(f"instance {inst.id}: attribute {a!r} not in schema")
    if vocab is None:
        vocab = model_vocab([train_set, val_set], schema, config.tokenize, config.min_freq)
    value_space = training_value_space(schema, train_set) if config.variant == CLS else []
    rng = np.random.default_rng(config.seed)
    params = init_params(config, vocab, schema, value_space, rng, embeddings)
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.adam_eps, config.clip_norm,
               frozen_names(config))

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint(config, vocab, schema, value_space, params.copy(), rng.bit_generator.state, epoch)

    best = snapshot(0)
    best_score = -math.inf
    history: list[dict] = []
    stale = 0
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for step_no, start in enumerate(range(0, n, config.batch_size)):
            batch = make_batch([train_set[i] for i in order[start : start + config.batch_size]],
                               vocab, schema, value_space, config)
            params.zero_grad()
            loss = joint_loss(batch, params, config)
            value = loss.item()
            if not math.isfinite(value):
                bad = _first_bad_instance(batch, params, config)
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step_no} (instance {bad})")
            loss.backward()
            opt.step()
            total += value
        entry = {"epoch": epoch, "train_loss": total}
        if val_set:
            report = evaluate_model(params, config, vocab, schema, value_space, val_set,
                                    batch_size=config.val_batch_size)
            entry["val"] = report.to_dict()
            score = report.f1
        else:
            score = -total
        history.append(entry)
        log.info("epoch %d loss %.4f val value F1 %s", epoch, total, entry.get("val", {}).get("value", {}).get("f1"))
        if score > best_score:
            best_score, best, stale = score, snapshot(epoch), 0
        else:
            stale += 1
            if config.patience is not None and stale >= config.patience:
                log.info("early stop after epoch %d", epoch)
                break
    return TrainResult(best, history, params)


# ---------------------------------------------------------------------------
# gradient check on a toy problem
# ---------------------------------------------------------------------------


def toy_problem(variant: str, seed: int = 0):
    """Small fixed problem: |V|=20, d_a=8, L=6, 3 attributes, 6 values, 2 instances.

    Returns (config, batch, params). Parameters are drawn at a larger scale than
    the training init so the check exercises non-trivial activations.
    """
    rng = np.random.default_rng(seed)
    words = [f"w{k}" for k in range(15)]
    vocab = Vocab(words, mode="space")
    schema = Schema(["a0", "a1", "a2"], [(f"a{i}", f"w{2 * i + j}") for i in range(3) for j in range(2)])
    instances = [
        ProductInstance("t0", ["w0", "w7", "w2", "w9", "w10", "w11"], {"a0": ["w0"], "a1": ["w2"]}),
        ProductInstance("t1", ["w12", "w5", "w13", "w4", "w1", "w14"], {"a2": ["w5", "w4"], "a0": ["w1"]}),
    ]
    config = TrainConfig(variant=variant, l_max=6, d_a=8, t_max=5, init_scale=0.5, tokenize="space", seed=seed)
    value_space = list(schema.values) if variant == CLS else []
    params = init_params(config, vocab, schema, value_space, rng)
    batch = make_batch(instances, vocab, schema, value_space, config)
    return config, batch, params


def toy_grad_check(variant: str, seed: int = 0, eps: float = 1e-5) -> float:
    config, batch, params = toy_problem(variant, seed)
    return nk.grad_check(lambda p: joint_loss(batch, p, config), params, eps)
