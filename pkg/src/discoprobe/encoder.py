"""Frozen per-layer representations from pretrained transformer checkpoints.

Supports encoder-only, decoder-only, and encoder-decoder models.  For
encoder-decoder models the layer index runs over the encoder stack first and
the decoder stack second (a 6+6 model exposes layers 1..12, with 7..12 read
from decoder hidden states under teacher forcing on the same token sequence).

Encoding never updates model parameters; a checksum helper is provided so
harness runs can assert frozenness.  Pooled vectors can be cached on disk
keyed by (model, layer, pooling, content hash).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

ARCH_ENC = "ENC"
ARCH_DEC = "DEC"
ARCH_ENCDEC = "ENCDEC"

POOL_CLS = "CLS"
POOL_MEAN = "MEAN"

#: Decoder-only model types that lack an ``is_decoder`` config flag.
_DECODER_ONLY_TYPES = {
    "gpt2", "gptj", "gpt_neo", "gpt_neox", "gpt_bigcode", "openai-gpt",
    "llama", "mistral", "opt", "bloom", "falcon", "xglm", "codegen", "phi",
}

#: Model families that use a classification-token embedding on pair tasks.
_CLS_POOLING_FAMILIES = ("bert", "albert")


class EncoderError(Exception):
    """Raised for unknown models, bad layer indices, or pooling problems."""


@dataclass(frozen=True)
class EncoderSpec:
    """A resolved pretrained checkpoint plus its layer/pooling semantics."""

    name: str
    checkpoint: str
    arch: str
    num_layers: int
    hidden_dim: int
    tokenizer: str
    pooling_default: str = POOL_MEAN
    encoder_layers: int = 0  # ENCDEC only: size of the encoder half

    def layer_kind(self, layer: int) -> str:
        """'encoder' or 'decoder' depending on where the layer index lands."""
        if self.arch == ARCH_ENCDEC and layer > self.encoder_layers:
            return "decoder"
        return "decoder" if self.arch == ARCH_DEC else "encoder"


@dataclass(frozen=True)
class SegmentBudget:
    """Per-segment token budget. ``keep="tail"`` retains the final tokens."""

    max_tokens: int
    keep: str = "head"

    def __post_init__(self):
        if self.keep not in ("head", "tail"):
            raise EncoderError(f"budget keep must be 'head' or 'tail', got {self.keep!r}")
        if self.max_tokens < 1:
            raise EncoderError("budget must allow at least one token")


#: Token budgets per task, following the training configurations used for
#: each dataset: contexts keep their final 450 tokens, candidates their
#: first 50; ordering/connective segments get 50, RST pair segments 250,
#: and segmentation documents 512.
CONTEXT_BUDGET = SegmentBudget(450, keep="tail")
CANDIDATE_BUDGET = SegmentBudget(50)
SENTENCE_BUDGET = SegmentBudget(50)
RST_SEGMENT_BUDGET = SegmentBudget(250)
DOCUMENT_BUDGET = SegmentBudget(512)


@dataclass
class LayerRepresentation:
    """Pooled fixed-width vectors for a batch of segments at one layer."""

    model: str
    layer: int
    pooling: str
    vectors: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.vectors)):
            raise EncoderError("non-finite values in pooled vectors")


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def load_registry(path=None) -> list[dict]:
    """Load the model registry (the bundled default covers the stock zoo)."""
    if path is not None:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    ref = resources.files("discoprobe.data").joinpath("model_registry.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def registry_entry(name: str, registry: list[dict] | None = None) -> dict:
    for entry in registry or load_registry():
        if entry["name"] == name:
            return entry
    raise EncoderError(f"model {name!r} not in registry")


def register_model(entry: dict | str, registry: list[dict] | None = None) -> EncoderSpec:
    """Resolve a registry entry (or bare checkpoint id) into an EncoderSpec.

    The architecture and layer count are classified from the checkpoint's
    config metadata; explicit registry fields take precedence.
    """
    from transformers import AutoConfig

    if isinstance(entry, str):
        try:
            entry = registry_entry(entry, registry)
        except EncoderError:
            entry = {"name": entry, "checkpoint": entry}
    checkpoint = entry.get("checkpoint", entry["name"])
    try:
        cfg = AutoConfig.from_pretrained(checkpoint)
    except Exception as exc:
        raise EncoderError(f"cannot resolve checkpoint {checkpoint!r}: {exc}") from exc

    if cfg.is_encoder_decoder:
        arch = ARCH_ENCDEC
        enc = _first_attr(cfg, "encoder_layers", "num_layers")
        dec = _first_attr(cfg, "decoder_layers", "num_decoder_layers") or enc
        num_layers = enc + dec
    else:
        if cfg.model_type in _DECODER_ONLY_TYPES or getattr(cfg, "is_decoder", False):
            arch = ARCH_DEC
        else:
            arch = ARCH_ENC
        enc = 0
        num_layers = _first_attr(cfg, "num_hidden_layers", "n_layer", "num_layers")

    arch = entry.get("arch", arch)
    if arch not in (ARCH_ENC, ARCH_DEC, ARCH_ENCDEC):
        raise EncoderError(f"unknown architecture {arch!r}")
    num_layers = entry.get("num_layers", num_layers)
    hidden = _first_attr(cfg, "hidden_size", "n_embd", "d_model")
    pooling = entry.get("pooling", _default_pooling(cfg.model_type))
    return EncoderSpec(
        name=entry["name"],
        checkpoint=checkpoint,
        arch=arch,
        num_layers=num_layers,
        hidden_dim=hidden,
        tokenizer=entry.get("tokenizer", checkpoint),
        pooling_default=pooling,
        encoder_layers=enc if arch == ARCH_ENCDEC else 0,
    )


def _first_attr(cfg, *names):
    for n in names:
        v = getattr(cfg, n, None)
        if v is not None:
            return v
    raise EncoderError(f"config for {cfg.model_type!r} has none of {names}")


def _default_pooling(model_type: str) -> str:
    return POOL_CLS if model_type in _CLS_POOLING_FAMILIES else POOL_MEAN


@lru_cache(maxsize=4)
def _load_model(checkpoint: str, arch: str):
    from transformers import AutoModel

    model = AutoModel.from_pretrained(checkpoint)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


@lru_cache(maxsize=8)
def _load_tokenizer(name: str):
    from transformers import AutoTokenizer

    tok = AutoTokenizer.from_pretrained(name)
    if tok.pad_token is None:
        tok.pad_token = tok.eos_token if tok.eos_token else tok.unk_token
    return tok


@lru_cache(maxsize=8)
def _special_skeleton(name: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """The special-token ids a tokenizer wraps around a single sequence."""
    tok = _load_tokenizer(name)
    bare = tok("x", add_special_tokens=False)["input_ids"]
    full = tok("x", add_special_tokens=True)["input_ids"]
    for start in range(len(full) - len(bare) + 1):
        if full[start:start + len(bare)] == bare:
            return tuple(full[:start]), tuple(full[start + len(bare):])
    raise EncoderError(f"cannot derive the special-token skeleton for {name!r}")


def weights_checksum(spec: EncoderSpec) -> str:
    """SHA-256 over all parameter tensors, for frozenness assertions."""
    model = _load_model(spec.checkpoint, spec.arch)
    h = hashlib.sha256()
    state = model.state_dict()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].numpy(force=True).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def _check_layer(spec: EncoderSpec, layer: int) -> None:
    if not 1 <= layer <= spec.num_layers:
        raise EncoderError(
            f"layer {layer} out of range 1..{spec.num_layers} for {spec.name}"
        )


def _truncate(ids: list[int], budget: SegmentBudget | None) -> list[int]:
    if budget is None or len(ids) <= budget.max_tokens:
        return ids
    if budget.keep == "tail":
        return ids[-budget.max_tokens:]
    return ids[:budget.max_tokens]


def _segment_ids(tok, segments: Sequence[str], budgets) -> list[list[int]]:
    if budgets is None:
        budgets = [None] * len(segments)
    elif isinstance(budgets, SegmentBudget):
        budgets = [budgets] * len(segments)
    elif len(budgets) != len(segments):
        raise EncoderError("one budget per segment (or a single shared budget)")
    out = []
    for text, budget in zip(segments, budgets):
        ids = tok(text, add_special_tokens=False)["input_ids"]
        out.append(_truncate(ids, budget))
    return out


def _forward_hidden(model, spec: EncoderSpec, input_ids, attention_mask, layers):
    """Hidden states for the requested layers, honoring the arch's semantics."""
    with torch.no_grad():
        if spec.arch == ARCH_ENCDEC:
            start = model.config.decoder_start_token_id
            if start is None:
                start = model.config.bos_token_id
            decoder_ids = torch.cat(
                [torch.full((input_ids.shape[0], 1), start, dtype=input_ids.dtype), input_ids[:, :-1]],
                dim=1,
            )
            out = model(
                input_ids=input_ids,
                attention_mask=attention_mask,
                decoder_input_ids=decoder_ids,
                decoder_attention_mask=attention_mask,
                output_hidden_states=True,
            )
            states = {}
            for layer in layers:
                if layer <= spec.encoder_layers:
                    states[layer] = out.encoder_hidden_states[layer]
                else:
                    states[layer] = out.decoder_hidden_states[layer - spec.encoder_layers]
            return states
        out = model(input_ids=input_ids, attention_mask=attention_mask, output_hidden_states=True)
        return {layer: out.hidden_states[layer] for layer in layers}


def encode_layers(
    spec: EncoderSpec,
    segments: Sequence[str],
    layers: Sequence[int],
    pooling: str | None = None,
    budgets=None,
    batch_size: int = 32,
) -> dict[int, np.ndarray]:
    """Pooled vectors for every segment at each requested layer.

    One forward pass per batch serves all layers, which is what makes
    full-depth sweeps affordable.  Deterministic for fixed inputs.
    """
    pooling = pooling or spec.pooling_default
    if pooling not in (POOL_CLS, POOL_MEAN):
        raise EncoderError(f"unknown pooling {pooling!r}")
    for layer in layers:
        _check_layer(spec, layer)
    tok = _load_tokenizer(spec.tokenizer)
    if pooling == POOL_CLS and tok.cls_token_id is None:
        raise EncoderError(f"{spec.name} has no classification token; use MEAN pooling")
    model = _load_model(spec.checkpoint, spec.arch)

    prefix, suffix = _special_skeleton(spec.tokenizer)
    if pooling == POOL_CLS and tok.cls_token_id not in prefix:
        raise EncoderError(f"{spec.name} does not start inputs with a classification token")

    seg_ids = _segment_ids(tok, segments, budgets)
    out = {layer: np.empty((len(segments), spec.hidden_dim), dtype=np.float32) for layer in layers}
    for lo in range(0, len(seg_ids), batch_size):
        chunk = seg_ids[lo:lo + batch_size]
        batch = [list(prefix) + ids + list(suffix) for ids in chunk]
        input_ids, mask = _pad_batch(batch, tok.pad_token_id)
        states = _forward_hidden(model, spec, input_ids, mask, layers)
        content = _content_mask(chunk, len(prefix), input_ids.shape[1])
        for layer, hs in states.items():
            out[layer][lo:lo + len(batch)] = _pool(hs, pooling, prefix, tok, content)
    return out


def _pad_batch(batch: list[list[int]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(b) for b in batch)
    input_ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(batch), width), dtype=torch.long)
    for i, ids in enumerate(batch):
        input_ids[i, :len(ids)] = torch.tensor(ids, dtype=torch.long)
        mask[i, :len(ids)] = 1
    return input_ids, mask


def _content_mask(chunk: list[list[int]], n_prefix: int, width: int) -> torch.Tensor:
    """True at real segment tokens: padding and special tokens excluded."""
    mask = torch.zeros((len(chunk), width), dtype=torch.bool)
    for i, ids in enumerate(chunk):
        if ids:
            mask[i, n_prefix:n_prefix + len(ids)] = True
        else:  # degenerate empty segment: fall back to the skeleton tokens
            mask[i, :n_prefix + 1] = True
    return mask


def _pool(hidden, pooling, prefix, tok, content_mask) -> np.ndarray:
    if pooling == POOL_CLS:
        pos = prefix.index(tok.cls_token_id)
        return hidden[:, pos].numpy(force=True).astype(np.float32)
    m = content_mask.unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * m).sum(dim=1)
    counts = m.sum(dim=1).clamp(min=1.0)
    return (summed / counts).numpy(force=True).astype(np.float32)


def encode(
    spec: EncoderSpec,
    segments: Sequence[str],
    layer: int,
    pooling: str | None = None,
    budgets=None,
    batch_size: int = 32,
) -> LayerRepresentation:
    """Pooled vectors for ``segments`` at one layer of a frozen encoder."""
    vectors = encode_layers(spec, segments, [layer], pooling, budgets, batch_size)[layer]
    return LayerRepresentation(spec.name, layer, pooling or spec.pooling_default, vectors)


def encode_tokens(
    spec: EncoderSpec, text: str, layer: int, budget: SegmentBudget = DOCUMENT_BUDGET
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Per-subword vectors for ``text`` plus token-to-character offsets."""
    _check_layer(spec, layer)
    tok = _load_tokenizer(spec.tokenizer)
    enc = tok(text, add_special_tokens=False, return_offsets_mapping=True)
    ids, offsets = enc["input_ids"], enc["offset_mapping"]
    if budget is not None and len(ids) > budget.max_tokens:
        raise EncoderError(f"text has {len(ids)} tokens, over the {budget.max_tokens} budget")
    vectors, _ = _token_states(spec, tok, [ids], layer)
    return vectors, [tuple(o) for o in offsets]


def encode_token_runs(
    spec: EncoderSpec, pieces: Sequence[str], layer: int
) -> tuple[np.ndarray, list[int]]:
    """Per-token vectors for a concatenated sequence of text pieces.

    Tokenizes each piece independently and feeds the concatenation through
    the model in one pass, so the returned per-piece token counts always sum
    to the number of vectors (used by the EDU segmentation task).
    """
    _check_layer(spec, layer)
    tok = _load_tokenizer(spec.tokenizer)
    runs = [tok(p, add_special_tokens=False)["input_ids"] for p in pieces]
    ids = [t for run in runs for t in run]
    vectors, _ = _token_states(spec, tok, [ids], layer)
    return vectors, [len(r) for r in runs]


def _token_states(spec, tok, ids_batch, layer):
    model = _load_model(spec.checkpoint, spec.arch)
    prefix, suffix = _special_skeleton(spec.tokenizer)
    batch = [list(prefix) + list(ids) + list(suffix) for ids in ids_batch]
    input_ids, mask = _pad_batch(batch, tok.pad_token_id)
    states = _forward_hidden(model, spec, input_ids, mask, [layer])[layer]
    rows = [
        states[i, len(prefix):len(prefix) + len(content)]
        for i, content in enumerate(ids_batch)
    ]
    vectors = torch.cat(rows).numpy(force=True).astype(np.float32)
    if not np.all(np.isfinite(vectors)):
        raise EncoderError("non-finite values in token vectors")
    return vectors, [len(c) for c in ids_batch]


# ---------------------------------------------------------------------------
# Feature cache
# ---------------------------------------------------------------------------

def content_hash(segments: Iterable[str], budgets=None) -> str:
    h = hashlib.sha256()
    for s in segments:
        h.update(s.encode("utf-8"))
        h.update(b"\x00")
    if budgets is not None:
        h.update(repr(budgets).encode("utf-8"))
    return h.hexdigest()


class FeatureCache:
    """Disk cache of pooled vectors, one array per (model, layer, pooling, content).

    Arrays are stored as ``.npy`` with a JSON sidecar describing the key.
    Writes go through a temp file and an atomic rename, so concurrent readers
    and a single writer per key are safe.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _key(self, meta: dict) -> str:
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:32]

    def lookup(self, meta: dict) -> np.ndarray | None:
        path = self.directory / f"{self._key(meta)}.npy"
        if not path.exists():
            return None
        return np.load(path)

    def store(self, meta: dict, array: np.ndarray) -> None:
        key = self._key(meta)
        tmp = self.directory / f"{key}.tmp.npy"
        np.save(tmp, array)
        tmp.replace(self.directory / f"{key}.npy")
        sidecar = dict(meta, dim=int(array.shape[-1]), count=int(array.shape[0]))
        (self.directory / f"{key}.json").write_text(
            json.dumps(sidecar, indent=1), encoding="utf-8"
        )


def encode_layers_cached(
    spec: EncoderSpec,
    segments: Sequence[str],
    layers: Sequence[int],
    pooling: str | None = None,
    budgets=None,
    cache: FeatureCache | None = None,
    batch_size: int = 32,
) -> dict[int, np.ndarray]:
    """Like :func:`encode_layers` but backed by an optional disk cache."""
    pooling = pooling or spec.pooling_default
    if cache is None:
        return encode_layers(spec, segments, layers, pooling, budgets, batch_size)
    chash = content_hash(segments, budgets)
    out, missing = {}, []
    for layer in layers:
        meta = {"model": spec.name, "layer": layer, "pooling": pooling, "content_hash": chash}
        hit = cache.lookup(meta)
        if hit is not None:
            out[layer] = hit
        else:
            missing.append(layer)
    if missing:
        fresh = encode_layers(spec, segments, missing, pooling, budgets, batch_size)
        for layer, arr in fresh.items():
            meta = {"model": spec.name, "layer": layer, "pooling": pooling, "content_hash": chash}
            cache.store(meta, arr)
            out[layer] = arr
    return out


def subword_tokenizer(spec: EncoderSpec):
    """The encoder's subword tokenizer as a plain text -> tokens callable."""
    tok = _load_tokenizer(spec.tokenizer)

    def tokenize(text: str) -> list[str]:
        return tok.tokenize(text)

    return tokenize
