"""Vocabulary, dataset I/O, target composition, permutation, zero-shot splits and synthetic corpora."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK, SEP, EOS, BOS = "[PAD]", "[UNK]", "[SEP]", "[EOS]", "[BOS]"
SPECIAL_TOKENS = (PAD, UNK, SEP, EOS, BOS)
PAD_ID, UNK_ID, SEP_ID, EOS_ID, BOS_ID = range(5)

TOKENIZE_MODES = ("char", "space")


class DataError(ValueError):
    """Malformed or inconsistent dataset content."""


def tokenize(text: str, mode: str = "char") -> list[str]:
    """Per-character (whitespace dropped) or whitespace-split tokens."""
    if mode == "char":
        return [c for c in text if not c.isspace()]
    if mode == "space":
        return text.split()
    raise DataError(f"unknown tokenize mode {mode!r}; expected one of {TOKENIZE_MODES}")


def detokenize(tokens: Sequence[str], mode: str = "char") -> str:
    return ("" if mode == "char" else " ").join(tokens)


class Vocab:
    """Bidirectional token/id map. Ids 0..4 are the reserved special tokens."""

    def __init__(self, tokens: Iterable[str] = (), mode: str = "char"):
        if mode not in TOKENIZE_MODES:
            raise DataError(f"unknown tokenize mode {mode!r}")
        self.mode = mode
        self.id_to_token: list[str] = list(SPECIAL_TOKENS)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(SPECIAL_TOKENS)}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.mode == other.mode and self.id_to_token == other.id_to_token

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text, self.mode)

    def detokenize(self, tokens: Sequence[str]) -> str:
        return detokenize(tokens, self.mode)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def to_json(self) -> dict:
        return {"mode": self.mode, "tokens": self.id_to_token[len(SPECIAL_TOKENS):]}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocab":
        return cls(obj["tokens"], mode=obj.get("mode", "char"))


@dataclass
class Schema:
    attributes: list[str]
    values: list[tuple[str, str]]  # (owning attribute, value)

    def __post_init__(self):
        if len(set(self.attributes)) != len(self.attributes):
            raise DataError("schema attribute names must be unique")
        self.values = [tuple(v) for v in self.values]
        if len(set(self.values)) != len(self.values):
            raise DataError("schema values must be unique per attribute")
        known = set(self.attributes)
        for attr, value in self.values:
            if attr not in known:
                raise DataError(f"value {value!r} owned by unknown attribute {attr!r}")

    @property
    def n_attr(self) -> int:
        return len(self.attributes)

    def attr_index(self, name: str) -> int:
        return self.attributes.index(name)

    def to_json(self) -> dict:
        return {
            "attributes": list(self.attributes),
            "values": [{"attribute": a, "value": v} for a, v in self.values],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Schema":
        try:
            return cls(list(obj["attributes"]), [(v["attribute"], v["value"]) for v in obj["values"]])
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed schema: {exc}") from exc

    @classmethod
    def from_instances(cls, instances: Iterable["ProductInstance"], attributes: Sequence[str] | None = None) -> "Schema":
        attrs = list(attributes) if attributes is not None else []
        values: list[tuple[str, str]] = []
        seen = set()
        for inst in instances:
            for attr, vals in inst.gold.items():
                if attributes is None and attr not in attrs:
                    attrs.append(attr)
                for v in vals:
                    if (attr, v) not in seen:
                        seen.add((attr, v))
                        values.append((attr, v))
        return cls(attrs, values)


@dataclass
class ProductInstance:
    id: str
    tokens: list[str]
    gold: dict[str, list[str]] = field(default_factory=dict)

    def pairs(self) -> set[tuple[str, str]]:
        return {(a, v) for a, vs in self.gold.items() for v in vs}


@dataclass
class TargetSequence:
    attribute: int
    ids: list[int]


def validate_instance(inst: ProductInstance, schema: Schema | None = None, l_max: int | None = None) -> None:
    if not inst.tokens:
        raise DataError(f"instance {inst.id}: empty text")
    if l_max is not None and len(inst.tokens) > l_max:
        raise DataError(f"instance {inst.id}: {len(inst.tokens)} tokens exceeds L_max={l_max}")
    for attr, vals in inst.gold.items():
        if schema is not None and attr not in schema.attributes:
            raise DataError(f"instance {inst.id}: attribute {attr!r} not in schema")
        if not vals:
            raise DataError(f"instance {inst.id}: attribute {attr!r} has an empty value list")
        if len(set(vals)) != len(vals):
            raise DataError(f"instance {inst.id}: duplicate values for {attr!r}")


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------


def compose_target(values: Sequence[str], vocab: Vocab, t_max: int, attribute: int = 0) -> TargetSequence:
    """``v1 [SEP] v2 [SEP] ... [EOS]``, right-truncated to ``t_max`` with a terminal [EOS]."""
    if t_max < 1:
        raise DataError("t_max must be >= 1")
    ids: list[int] = []
    for k, value in enumerate(values):
        if k:
            ids.append(SEP_ID)
        ids.extend(vocab.encode(vocab.tokenize(value)))
    ids.append(EOS_ID)
    if len(ids) > t_max:
        ids = ids[: t_max - 1]
        # a dangling separator would only produce an empty segment
        while ids and ids[-1] == SEP_ID:
            ids.pop()
        ids.append(EOS_ID)
    return TargetSequence(attribute, ids)


def parse_generated(token_ids: Sequence[int], vocab: Vocab) -> list[str]:
    values: list[str] = []
    current: list[str] = []

    def flush():
        if current:
            v = vocab.detokenize(current)
            if v not in values:
                values.append(v)
            current.clear()

    for i in token_ids:
        i = int(i)
        if i == EOS_ID:
            break
        if i == SEP_ID:
            flush()
        else:
            current.append(vocab.id_to_token[i])
    flush()
    return values


# ---------------------------------------------------------------------------
# vocabulary and JSONL
# ---------------------------------------------------------------------------


def build_vocab(texts: Iterable[Sequence[str]], min_freq: int = 1, mode: str = "char") -> Vocab:
    """Vocabulary over token sequences; tokens below ``min_freq`` fall back to [UNK].

    Ordered by descending frequency, ties by first appearance, so the result is deterministic.
    """
    counts: Counter = Counter()
    first: dict[str, int] = {}
    for toks in texts:
        for t in toks:
            counts[t] += 1
            first.setdefault(t, len(first))
    keep = [t for t in counts if counts[t] >= min_freq and t not in SPECIAL_TOKENS]
    keep.sort(key=lambda t: (-counts[t], first[t]))
    return Vocab(keep, mode=mode)


def instance_to_json(inst: ProductInstance, mode: str = "char") -> dict:
    return {
        "id": inst.id,
        "text": detokenize(inst.tokens, mode),
        "labels": [{"attribute": a, "values": list(vs)} for a, vs in inst.gold.items()],
    }


def instance_from_json(obj: dict, mode: str = "char") -> ProductInstance:
    try:
        gold: dict[str, list[str]] = {}
        for label in obj["labels"]:
            attr = label["attribute"]
            if attr in gold:
                raise DataError(f"instance {obj['id']}: attribute {attr!r} listed twice")
            gold[attr] = list(label["values"])
        return ProductInstance(str(obj["id"]), tokenize(obj["text"], mode), gold)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed instance record: missing or invalid {exc}") from exc


def save_jsonl(instances: Iterable[ProductInstance], path, mode: str = "char") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_json(inst, mode), ensure_ascii=False) + "\n")


def load_jsonl(path, mode: str = "char", schema: Schema | None = None) -> list[ProductInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            inst = instance_from_json(obj, mode)
            validate_instance(inst, schema)
            out.append(inst)
    return out


def save_schema(schema: Schema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_json(), ensure_ascii=False, indent=1), encoding="utf-8")


def load_schema(path) -> Schema:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg})") from exc
    return Schema.from_json(obj)


# ---------------------------------------------------------------------------
# permutation and zero-shot
# ---------------------------------------------------------------------------


def find_span(tokens: Sequence[str], value_tokens: Sequence[str], taken: Sequence[bool] | None = None) -> int:
    """Start of the first occurrence of ``value_tokens`` not overlapping ``taken``; -1 if absent."""
    n, m = len(tokens), len(value_tokens)
    if m == 0:
        return -1
    for s in range(n - m + 1):
        if list(tokens[s : s + m]) == list(value_tokens) and (taken is None or not any(taken[s : s + m])):
            return s
    return -1


def permute_text(inst: ProductInstance, seed: int, mode: str = "char") -> ProductInstance:
    """Shuffle word order while every gold value moves as one contiguous, ordered block."""
    tokens = inst.tokens
    taken = [False] * len(tokens)
    starts: dict[int, int] = {}
    for vals in inst.gold.values():
        for v in vals:
            vt = tokenize(v, mode)
            s = find_span(tokens, vt, taken)
            if s < 0:
                if find_span(tokens, vt) >= 0:
                    continue  # same surface string already claimed by another attribute
                raise DataError(f"instance {inst.id}: value {v!r} is not a contiguous span of the text")
            starts[s] = len(vt)
            for k in range(s, s + len(vt)):
                taken[k] = True
    units: list[list[str]] = []
    pos = 0
    while pos < len(tokens):
        width = starts.get(pos, 1)
        units.append(list(tokens[pos : pos + width]))
        pos += width
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(units))
    permuted = [t for k in order for t in units[k]]
    return ProductInstance(inst.id, permuted, {a: list(vs) for a, vs in inst.gold.items()})


def permute_dataset(instances: Sequence[ProductInstance], seed: int, mode: str = "char") -> list[ProductInstance]:
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=len(instances))
    return [permute_text(inst, int(s), mode) for inst, s in zip(instances, seeds)]


def zero_shot_split(train: Iterable[ProductInstance], test: Iterable[ProductInstance]):
    """(seen, unseen) sets of (attribute, value) pairs among the test gold values."""
    train_pairs = set()
    for inst in train:
        train_pairs |= inst.pairs()
    test_pairs = set()
    for inst in test:
        test_pairs |= inst.pairs()
    unseen = test_pairs - train_pairs
    return test_pairs - unseen, unseen


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

_ATTR_NAMES = (
    "color", "material", "style", "pattern", "season", "fit", "collar", "sleeve",
    "length", "heel", "closure", "occasion", "technology", "shape", "lining", "waist",
)
_SYLLABLES = (
    "ka", "lo", "mi", "ru", "te", "sa", "no", "vi", "pe", "zu", "da", "ho", "ki", "ma",
    "ne", "ri", "so", "tu", "ba", "ge", "fo", "ja", "wi", "xe", "yo", "qu", "lu", "ce",
)


@dataclass
class SynthConfig:
    n_attr: int = 5
    values_per_attr: int = 4
    n_train: int = 200
    n_val: int = 50
    n_test: int = 50
    heldout_frac: float = 0.0
    l_max: int = 20
    seed: int = 0
    n_filler: int = 40
    cue_prob: float = 0.5
    max_attrs_per_instance: int = 3
    multi_value_prob: float = 0.2
    n_modifiers: int = 12
    heads_per_attr: int = 2


def _pseudo_words(rng, n: int, forbidden: set[str], syllables: int = 2) -> list[str]:
    out: list[str] = []
    while len(out) < n:
        w = "".join(rng.choice(_SYLLABLES, size=syllables))
        if w not in forbidden:
            forbidden.add(w)
            out.append(w)
    return out


def synth_generate(cfg: SynthConfig):
    """Deterministic (train, val, test, schema) with exact gold spans.

    Text is filler words with two-token value spans inserted; a value is
    sometimes preceded by an attribute cue word. Each attribute holds out
    ``round(heldout_frac * values_per_attr)`` values that occur only in val/test.
    """
    if cfg.n_attr < 1 or cfg.values_per_attr < 1:
        raise DataError("synthetic corpus needs at least one attribute and one value per attribute")
    if cfg.n_attr > len(_ATTR_NAMES):
        raise DataError(f"at most {len(_ATTR_NAMES)} synthetic attributes are supported")
    if not 0.0 <= cfg.heldout_frac < 1.0:
        raise DataError("heldout_frac must lie in [0, 1)")
    if cfg.values_per_attr > cfg.n_modifiers * cfg.heads_per_attr:
        raise DataError("values_per_attr exceeds the number of modifier/head combinations")
    n_held = int(round(cfg.heldout_frac * cfg.values_per_attr))
    if n_held >= cfg.values_per_attr:
        raise DataError("heldout_frac leaves no seen values for an attribute")
    per_value = 2 + (1 if cfg.cue_prob > 0 else 0)
    per_attr = 2 if cfg.multi_value_prob > 0 and cfg.values_per_attr > 1 else 1
    worst = min(cfg.max_attrs_per_instance, cfg.n_attr) * per_attr * per_value
    if cfg.l_max < worst:
        raise DataError(f"l_max={cfg.l_max} cannot hold the worst-case value layout ({worst} tokens)")
    if cfg.n_train < cfg.n_attr * (cfg.values_per_attr - n_held):
        raise DataError("n_train too small to show every seen value at least once")

    rng = np.random.default_rng(cfg.seed)
    used: set[str] = set(_ATTR_NAMES)
    attributes = list(_ATTR_NAMES[: cfg.n_attr])
    # values are "modifier head": heads belong to one attribute, modifiers are shared,
    # so a held-out value is a new combination of tokens that do occur in training
    modifiers = _pseudo_words(rng, cfg.n_modifiers, used)
    heads = {a: _pseudo_words(rng, cfg.heads_per_attr, used, syllables=3) for a in attributes}
    n_seen = cfg.values_per_attr - n_held
    seen_vals: dict[str, list[str]] = {}
    for attr in attributes:
        combos = [f"{m} {h}" for h in heads[attr] for m in modifiers]
        seen_vals[attr] = [combos[int(i)] for i in rng.choice(len(combos), size=n_seen, replace=False)]
    seen_mods = {v.split()[0] for vs in seen_vals.values() for v in vs}
    held_vals: dict[str, list[str]] = {}
    for attr in attributes:
        seen_heads = {v.split()[1] for v in seen_vals[attr]}
        cand = [f"{m} {h}" for h in heads[attr] if h in seen_heads for m in modifiers
                if m in seen_mods and f"{m} {h}" not in seen_vals[attr]]
        if len(cand) < n_held:
            raise DataError("too few modifier/head combinations left to hold out values")
        held_vals[attr] = [cand[int(i)] for i in rng.choice(len(cand), size=n_held, replace=False)]
    values = {a: seen_vals[a] + held_vals[a] for a in attributes}
    cues = {a: [f"{a}:", f"<{a}>"] for a in attributes}
    fillers = _pseudo_words(rng, cfg.n_filler, used, syllables=2)

    def make(split: str, n: int, pool: dict[str, list[str]], required: list[tuple[str, str]]):
        out = []
        for k in range(n):
            n_present = int(rng.integers(1, min(cfg.max_attrs_per_instance, cfg.n_attr) + 1))
            attrs = [attributes[i] for i in rng.choice(cfg.n_attr, size=n_present, replace=False)]
            forced = required[k] if k < len(required) else None
            if forced is not None and forced[0] not in attrs:
                attrs[0] = forced[0]
            gold: dict[str, list[str]] = {}
            for attr in sorted(attrs, key=attributes.index):
                cand = pool[attr]
                n_vals = 2 if (len(cand) > 1 and rng.random() < cfg.multi_value_prob) else 1
                chosen = [cand[i] for i in rng.choice(len(cand), size=n_vals, replace=False)]
                if forced is not None and forced[0] == attr and forced[1] not in chosen:
                    chosen[0] = forced[1]
                gold[attr] = chosen
            segments = []
            for attr, vals in gold.items():
                for v in vals:
                    seg = v.split()
                    if rng.random() < cfg.cue_prob:
                        seg = [cues[attr][int(rng.integers(2))]] + seg
                    segments.append(seg)
            order = rng.permutation(len(segments))
            segments = [segments[i] for i in order]
            used_len = sum(len(s) for s in segments)
            room = cfg.l_max - used_len
            n_fill = int(rng.integers(min(2, room), room + 1)) if room > 0 else 0
            slots = rng.integers(0, len(segments) + 1, size=n_fill)
            tokens: list[str] = []
            for pos in range(len(segments) + 1):
                tokens.extend(fillers[int(j)] for j in rng.integers(0, len(fillers), size=int((slots == pos).sum())))
                if pos < len(segments):
                    tokens.extend(segments[pos])
            out.append(ProductInstance(f"{split}-{k:05d}", tokens, gold))
        return out

    all_pool = {a: seen_vals[a] + held_vals[a] for a in attributes}
    req_train = [(a, v) for a in attributes for v in seen_vals[a]]
    req_test = [(a, v) for a in attributes for v in held_vals[a]]
    train = make("train", cfg.n_train, seen_vals, req_train)
    val = make("val", cfg.n_val, all_pool, [])
    test = make("test", cfg.n_test, all_pool, req_test)
    schema = Schema(attributes, [(a, v) for a in attributes for v in values[a]])
    return train, val, test, schema
