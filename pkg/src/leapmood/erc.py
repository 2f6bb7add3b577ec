"""Emotion recognition in conversation.

Per utterance: word embeddings concatenated with a char-LSTM summary of each
word, a BiLSTM over the words, additive attention pooling and a dense softmax.
Across the utterances of a conversation, a linear-chain CRF over the
per-utterance log-probabilities models label context.

Training minimises ``(weighted cross-entropy + crf_loss_weight * CRF NLL) / U``
where ``U`` is the number of utterances in the batch.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .corpus import DAILYDIALOG_LABELS, LabelSet
from .errors import FingerprintMismatch, InputError, ModelFormatError, NumericError
from .evaluation import confusion, metrics
from .preprocess import EncodedDialogue

logger = logging.getLogger(__name__)

RATE_MAX = 0.5


@dataclass(frozen=True)
class HyperParams:
    batch_size: int = 90
    epochs: int = 25
    word_emb_dim: int = 56
    char_emb_dim: int = 16
    char_lstm_hidden: int = 20
    spatial_dropout: float = 0.1
    lstm_dropout: float = 0.1
    lstm_recurrent_dropout: float = 0.1
    bilstm_hidden: int = 57
    bilstm_recurrent_dropout: float = 0.1

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.type == "int" or f.type is int:
                if int(value) != value or value < 1:
                    raise InputError(f"{f.name} must be a positive integer, got {value}")
                object.__setattr__(self, f.name, int(value))
            elif not 0.0 <= value <= RATE_MAX:
                raise InputError(f"{f.name} must lie in [0, {RATE_MAX}], got {value}")
            else:
                object.__setattr__(self, f.name, float(value))

    @classmethod
    def gene_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))


@dataclass(frozen=True)
class ModelConfig:
    hyper: HyperParams = field(default_factory=HyperParams)
    vocab_size: int = 30003
    char_vocab_size: int = 32
    max_seq_len: int = 100
    max_char_len: int = 10
    label_count: int = 7
    learning_rate: float = 1e-4
    attention_dim: int | None = None  # None: same as bilstm_hidden
    crf_loss_weight: float = 1.0

    def __post_init__(self):
        for name in ("vocab_size", "char_vocab_size", "max_seq_len", "max_char_len", "label_count"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if self.attention_dim is not None and self.attention_dim < 1:
            raise InputError("attention_dim must be >= 1")

    @property
    def attn_dim(self) -> int:
        return self.attention_dim if self.attention_dim is not None else self.hyper.bilstm_hidden

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["hyper"] = HyperParams(**d.get("hyper", {}))
        return cls(**d)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    hp = cfg.hyper
    d_in = hp.word_emb_dim + hp.char_lstm_hidden
    hb, hc, a, L = hp.bilstm_hidden, hp.char_lstm_hidden, cfg.attn_dim, cfg.label_count
    shapes = {
        "word_emb": (cfg.vocab_size, hp.word_emb_dim),
        "char_emb": (cfg.char_vocab_size, hp.char_emb_dim),
        "char_lstm.W": (hp.char_emb_dim, 4 * hc),
        "char_lstm.U": (hc, 4 * hc),
        "char_lstm.b": (4 * hc,),
    }
    for side in ("bilstm_fwd", "bilstm_bwd"):
        shapes[f"{side}.W"] = (d_in, 4 * hb)
        shapes[f"{side}.U"] = (hb, 4 * hb)
        shapes[f"{side}.b"] = (4 * hb,)
    shapes.update({
        "attn.W": (2 * hb, a),
        "attn.b": (a,),
        "attn.v": (a,),
        "dense.W": (2 * hb, L),
        "dense.b": (L,),
        "crf.transitions": (L, L),
        "crf.start": (L,),
        "crf.end": (L,),
    })
    return shapes


COMPONENTS = ("word_embedding", "char_embedding", "char_lstm", "bilstm", "attention", "dense", "crf")


def count_params(cfg: ModelConfig) -> dict[str, int]:
    """Closed-form parameter count per component, plus ``total``."""
    hp = cfg.hyper
    dw, dc, hc, hb = hp.word_emb_dim, hp.char_emb_dim, hp.char_lstm_hidden, hp.bilstm_hidden
    d_in = dw + hc
    a, L = cfg.attn_dim, cfg.label_count
    counts = {
        "word_embedding": cfg.vocab_size * dw,
        "char_embedding": cfg.char_vocab_size * dc,
        "char_lstm": 4 * ((dc + hc) * hc + hc),
        "bilstm": 2 * 4 * ((d_in + hb) * hb + hb),
        "attention": (2 * hb * a + a) + a,
        "dense": 2 * hb * L + L,
        "crf": L * L + 2 * L,
    }
    counts["total"] = sum(counts.values())
    return counts


def model_bytes(cfg: ModelConfig, bits: int = 32) -> int:
    return count_params(cfg)["total"] * bits // 8


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    hp = cfg.hyper
    d_in = hp.word_emb_dim + hp.char_lstm_hidden
    p = {
        "word_emb": rng.uniform(-0.05, 0.05, size=(cfg.vocab_size, hp.word_emb_dim)),
        "char_emb": rng.uniform(-0.05, 0.05, size=(cfg.char_vocab_size, hp.char_emb_dim)),
    }
    p.update(_prefixed("char_lstm", nn.init_lstm(rng, hp.char_emb_dim, hp.char_lstm_hidden)))
    p.update(_prefixed("bilstm_fwd", nn.init_lstm(rng, d_in, hp.bilstm_hidden)))
    p.update(_prefixed("bilstm_bwd", nn.init_lstm(rng, d_in, hp.bilstm_hidden)))
    p.update(_prefixed("attn", nn.init_attention(rng, 2 * hp.bilstm_hidden, cfg.attn_dim)))
    p.update(_prefixed("dense", nn.init_dense(rng, 2 * hp.bilstm_hidden, cfg.label_count)))
    p.update(_prefixed("crf", nn.init_crf(cfg.label_count)))
    return p


def _prefixed(prefix, d):
    return {f"{prefix}.{k}": v for k, v in d.items()}


def _sub(params, prefix):
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".")}


# ------------------------------------------------------------------ forward

@dataclass
class Batch:
    word_ids: np.ndarray
    char_ids: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray | None
    offsets: list[int]  # conversation boundaries into the utterance axis

    @classmethod
    def from_dialogues(cls, dialogues: Sequence[EncodedDialogue]) -> "Batch":
        offsets = [0]
        for d in dialogues:
            offsets.append(offsets[-1] + len(d))
        labels = None
        if all(d.labels is not None for d in dialogues):
            labels = np.concatenate([d.labels for d in dialogues])
        return cls(
            np.concatenate([d.word_ids for d in dialogues]),
            np.concatenate([d.char_ids for d in dialogues]),
            np.concatenate([d.lengths for d in dialogues]),
            labels,
            offsets,
        )

    def conversations(self):
        return list(zip(self.offsets[:-1], self.offsets[1:]))


def _dropout_masks(cfg, batch, n_words, rng):
    hp = cfg.hyper
    U = len(batch.lengths)
    d_in = hp.word_emb_dim + hp.char_lstm_hidden
    return {
        "spatial": nn.dropout_mask((U, 1, d_in), hp.spatial_dropout, rng),
        "char_in": nn.dropout_mask((n_words, hp.char_emb_dim), hp.lstm_dropout, rng),
        "char_rec": nn.dropout_mask((n_words, hp.char_lstm_hidden), hp.lstm_recurrent_dropout, rng),
        "bi_rec_f": nn.dropout_mask((U, hp.bilstm_hidden), hp.bilstm_recurrent_dropout, rng),
        "bi_rec_b": nn.dropout_mask((U, hp.bilstm_hidden), hp.bilstm_recurrent_dropout, rng),
    }


def forward(params, cfg: ModelConfig, batch: Batch, rng: np.random.Generator | None = None):
    """Per-utterance log-probabilities ``(U, L)`` plus a cache for :func:`backward`.

    Dropout is active iff ``rng`` is given.
    """
    hp = cfg.hyper
    word_ids, char_ids, lengths = batch.word_ids, batch.char_ids, batch.lengths
    U, T = word_ids.shape
    valid = np.arange(T)[None, :] < lengths[:, None]
    pos = np.nonzero(valid)
    n_words = len(pos[0])
    masks = _dropout_masks(cfg, batch, n_words, rng) if rng is not None else None

    word_vec = params["word_emb"][word_ids]
    cids = char_ids[pos]
    clen = (cids != 0).sum(axis=1)
    char_vec = params["char_emb"][cids]
    if n_words:
        _, char_final, char_cache = nn.lstm_forward(
            char_vec, _sub(params, "char_lstm"), clen,
            input_mask=None if masks is None else masks["char_in"],
            recurrent_mask=None if masks is None else masks["char_rec"],
        )
    else:
        char_final, char_cache = np.zeros((0, hp.char_lstm_hidden)), None
    char_feat = np.zeros((U, T, hp.char_lstm_hidden))
    char_feat[pos] = char_final

    x = np.concatenate([word_vec, char_feat], axis=-1)
    if masks is not None:
        x = x * masks["spatial"]
    hidden, bi_cache = nn.bilstm_forward(
        x, _sub(params, "bilstm_fwd"), _sub(params, "bilstm_bwd"), lengths,
        recurrent_masks=(None, None) if masks is None else (masks["bi_rec_f"], masks["bi_rec_b"]),
    )

    nonempty = np.nonzero(lengths > 0)[0]
    pooled = np.zeros((U, 2 * hp.bilstm_hidden))
    attn_cache = None
    if len(nonempty):
        pooled_ne, _, attn_cache = nn.attention_forward(hidden[nonempty], _sub(params, "attn"), lengths[nonempty])
        pooled[nonempty] = pooled_ne
    logp, dense_cache = nn.dense_forward(pooled, _sub(params, "dense"))
    cache = dict(pos=pos, cids=cids, word_ids=word_ids, char_cache=char_cache, masks=masks, bi_cache=bi_cache,
                 nonempty=nonempty, attn_cache=attn_cache, dense_cache=dense_cache, shape=(U, T))
    return logp, cache


def loss_and_grad(params, cfg: ModelConfig, batch: Batch, weights: np.ndarray, rng=None):
    """Batch loss and gradients for every parameter."""
    if batch.labels is None:
        raise InputError("training batch has no labels")
    logp, cache = forward(params, cfg, batch, rng)
    U = len(batch.lengths)
    y = batch.labels
    w = weights[y]
    ce = -np.sum(w * logp[np.arange(U), y])
    dlogp = np.zeros_like(logp)
    dlogp[np.arange(U), y] = -w
    crf_p = _sub(params, "crf")
    crf_total = 0.0
    crf_grads = {k: np.zeros_like(v) for k, v in crf_p.items()}
    lam = cfg.crf_loss_weight
    if lam:
        for a, b in batch.conversations():
            nll, g = nn.crf_nll(logp[a:b], y[a:b], crf_p)
            crf_total += nll
            dlogp[a:b] += lam * g.pop("emissions")
            for k in crf_grads:
                crf_grads[k] += g[k]
    loss = (ce + lam * crf_total) / U
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss")
    dlogp /= U
    grads = backward(params, cfg, dlogp, cache)
    for k, g in crf_grads.items():
        grads[f"crf.{k}"] = lam * g / U
    return float(loss), grads


def backward(params, cfg: ModelConfig, dlogp, cache) -> dict[str, np.ndarray]:
    hp = cfg.hyper
    U, T = cache["shape"]
    grads = {}
    dpooled, g = nn.dense_backward(dlogp, cache["dense_cache"])
    grads.update(_prefixed("dense", g))

    dhidden = np.zeros((U, T, 2 * hp.bilstm_hidden))
    nonempty = cache["nonempty"]
    if cache["attn_cache"] is not None:
        dh_ne, g = nn.attention_backward(dpooled[nonempty], cache["attn_cache"])
        dhidden[nonempty] = dh_ne
    else:
        g = {k: np.zeros_like(v) for k, v in _sub(params, "attn").items()}
    grads.update(_prefixed("attn", g))

    dx, g_f, g_b = nn.bilstm_backward(dhidden, cache["bi_cache"])
    grads.update(_prefixed("bilstm_fwd", g_f))
    grads.update(_prefixed("bilstm_bwd", g_b))
    if cache["masks"] is not None:
        dx = dx * cache["masks"]["spatial"]

    dw = hp.word_emb_dim
    pos = cache["pos"]
    d_char_feat = dx[..., dw:]
    # padded positions carry zero gradient, so only valid ones are scattered
    grads["word_emb"] = nn.embedding_backward(dx[pos][:, :dw], cache["word_ids"][pos], params["word_emb"].shape)

    if cache["char_cache"] is not None:
        dchar_vec, g = nn.lstm_backward(None, d_char_feat[pos], cache["char_cache"])
    else:
        dchar_vec = np.zeros((0,) + cache["cids"].shape[1:] + (hp.char_emb_dim,))
        g = {k: np.zeros_like(v) for k, v in _sub(params, "char_lstm").items()}
    grads.update(_prefixed("char_lstm", g))
    grads["char_emb"] = nn.embedding_backward(dchar_vec, cache["cids"], params["char_emb"].shape)
    return grads


# ---------------------------------------------------------------- training

def class_weights(label_counts, n_labels: int | None = None) -> np.ndarray:
    """Balanced weights ``N / (K * N_c)`` over the K classes present.

    ``label_counts`` is a sequence indexed by label id or a ``{id: count}``
    mapping. Absent classes get weight 0.
    """
    if isinstance(label_counts, dict):
        if not label_counts:
            raise InputError("empty label histogram")
        size = n_labels if n_labels is not None else max(label_counts) + 1
        counts = np.zeros(size)
        for k, v in label_counts.items():
            counts[k] = v
    else:
        counts = np.asarray(label_counts, dtype=np.float64)
        if n_labels is not None and len(counts) < n_labels:
            counts = np.pad(counts, (0, n_labels - len(counts)))
    present = counts > 0
    if counts.size == 0 or not present.any():
        raise InputError("empty label histogram")
    w = np.zeros_like(counts, dtype=np.float64)
    w[present] = counts.sum() / (present.sum() * counts[present])
    absent = np.nonzero(~present)[0].tolist()
    if absent:
        logger.warning("classes %s absent from training data; weight 0", absent)
    return w


@dataclass
class EarlyStopping:
    """Stop once ``patience`` epochs pass without the monitored metric improving.

    ``metric`` is ``"micro_f1"`` (excluded labels left out) or ``"accuracy"``.
    """

    patience: int = 3
    metric: str = "micro_f1"

    def __post_init__(self):
        if self.metric not in ("micro_f1", "accuracy"):
            raise InputError(f"unknown early-stopping metric {self.metric!r}")
        if self.patience < 0:
            raise InputError("patience must be >= 0")


@dataclass
class TrainedModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    labels: LabelSet = DAILYDIALOG_LABELS
    vocab_fingerprint: str | None = None
    history: list[dict] = field(default_factory=list)

    def check_vocab(self, fingerprint: str) -> None:
        if self.vocab_fingerprint is not None and fingerprint != self.vocab_fingerprint:
            raise FingerprintMismatch(
                f"model was trained with vocabulary {self.vocab_fingerprint}, got {fingerprint}"
            )


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def evaluate_dialogues(model: TrainedModel, dialogues: Sequence[EncodedDialogue]) -> dict:
    """Viterbi-decode labelled dialogues; return accuracy, micro F1 and the confusion matrix."""
    gold, pred = [], []
    for _, path, d in _predict_batched(model, dialogues):
        gold.extend(d.labels.tolist())
        pred.extend(path)
    cm = confusion(gold, pred, model.config.label_count)
    rep = metrics(cm, model.labels.excluded_for_averaging)
    acc = float(np.trace(cm.counts) / max(cm.total, 1))
    return {"accuracy": acc, "micro_f1": rep.micro_f1, "confusion": cm, "report": rep}


def train(
    train_set: Sequence[EncodedDialogue],
    val_set: Sequence[EncodedDialogue],
    config: ModelConfig,
    rng=0,
    early_stopping: EarlyStopping | None = EarlyStopping(),
    labels: LabelSet = DAILYDIALOG_LABELS,
    weights: np.ndarray | None = None,
    vocab_fingerprint: str | None = None,
    init: dict[str, np.ndarray] | None = None,
) -> TrainedModel:
    """Mini-batch Adam over shuffled whole conversations.

    Runs ``config.hyper.epochs`` epochs unless early stopping fires and
    returns the parameters from the best validation epoch.
    """
    if not train_set or not val_set:
        raise InputError("training and validation splits must be non-empty")
    if len(labels) != config.label_count:
        raise InputError(f"label set has {len(labels)} names, config expects {config.label_count}")
    rng = _as_rng(rng)
    params = copy.deepcopy(init) if init is not None else init_params(config, rng)
    if weights is None:
        counts = np.bincount(np.concatenate([d.labels for d in train_set]), minlength=config.label_count)
        weights = class_weights(counts)
    state = nn.AdamState()
    monitor = early_stopping.metric if early_stopping else "micro_f1"
    model = TrainedModel(config, params, labels, vocab_fingerprint, [])
    best_value, best_params, since_best = -np.inf, copy.deepcopy(params), 0
    bs = config.hyper.batch_size
    for epoch in range(1, config.hyper.epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for bi, start in enumerate(range(0, len(order), bs)):
            batch = Batch.from_dialogues([train_set[i] for i in order[start:start + bs]])
            try:
                loss, grads = loss_and_grad(params, config, batch, weights, rng)
                nn.check_finite("gradients", *grads.values())
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {bi}: {exc}") from exc
            nn.adam_step(params, grads, state, config.learning_rate)
            losses.append(loss * len(batch.lengths))
        n_utt = sum(len(d) for d in train_set)
        val = evaluate_dialogues(model, val_set)
        record = {
            "epoch": epoch,
            "train_loss": float(np.sum(losses) / n_utt),
            "val_accuracy": val["accuracy"],
            "val_micro_f1": val["micro_f1"],
        }
        model.history.append(record)
        logger.info("epoch %d loss %.5f val acc %.4f micro-F1 %.4f", epoch, record["train_loss"],
                    val["accuracy"], val["micro_f1"])
        value = val[monitor]
        if value > best_value:
            best_value, best_params, since_best = value, copy.deepcopy(params), 0
        else:
            since_best += 1
        if early_stopping is not None and since_best >= early_stopping.patience:
            break
    model.params = best_params
    return model


# -------------------------------------------------------------- prediction

def _predict_batched(model: TrainedModel, dialogues: Sequence[EncodedDialogue], chunk: int = 64):
    for start in range(0, len(dialogues), chunk):
        part = list(dialogues[start:start + chunk])
        if any(len(d) == 0 for d in part):
            raise InputError("cannot predict an empty conversation")
        batch = Batch.from_dialogues(part)
        logp, _ = forward(model.params, model.config, batch)
        crf_p = _sub(model.params, "crf")
        for (a, b), d in zip(batch.conversations(), part):
            path, _ = nn.crf_viterbi(logp[a:b], crf_p)
            yield np.exp(logp[a:b]), path, d


def predict(model: TrainedModel, conversation: EncodedDialogue) -> tuple[np.ndarray, list[int]]:
    """Softmax probabilities per utterance and the CRF-decoded label path."""
    if len(conversation) == 0:
        raise InputError("cannot predict an empty conversation")
    probs, path, _ = next(_predict_batched(model, [conversation]))
    return probs, path


def predict_many(model: TrainedModel, conversations: Sequence[EncodedDialogue]):
    return [(p, path) for p, path, _ in _predict_batched(model, conversations)]


# ----------------------------------------------------------- serialization

MAGIC = b"LEAPMOOD"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def save_model(model: TrainedModel, path) -> None:
    """Write the model container.

    Layout: ``MAGIC | u32 version | u64 header length | JSON header | payload``.
    The header lists every tensor's name, shape, byte offset and size; the
    payload is raw little-endian float64 data.
    """
    tensors, payload, offset = [], [], 0
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
        payload.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "labels": model.labels.to_dict(),
        "vocab_fingerprint": model.vocab_fingerprint,
        "history": model.history,
        "tensors": tensors,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for chunk in payload:
            fh.write(chunk)


def load_model(path) -> TrainedModel:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise ModelFormatError(f"{path}: file too short to hold a format version")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: not a leapmood model file (bad magic)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    body = data[_PREFIX.size:]
    if len(body) < hlen:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(body[:hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header ({exc})") from None
    if header.get("format_version") != version:
        raise ModelFormatError(f"{path}: header version {header.get('format_version')} != {version}")
    config = ModelConfig.from_dict(header["config"])
    payload = body[hlen:]
    expected = param_shapes(config)
    params = {}
    for t in header["tensors"]:
        name, shape = t["name"], tuple(t["shape"])
        if name not in expected:
            raise ModelFormatError("unexpected tensor", tensor=name)
        if shape != expected[name]:
            raise ModelFormatError(f"shape {shape} does not match config shape {expected[name]}", tensor=name)
        if int(np.prod(shape)) * 8 != t["nbytes"]:
            raise ModelFormatError(f"shape {shape} inconsistent with {t['nbytes']} bytes", tensor=name)
        end = t["offset"] + t["nbytes"]
        if t["offset"] < 0 or end > len(payload):
            raise ModelFormatError("payload truncated", tensor=name)
        params[name] = np.frombuffer(payload[t["offset"]:end], dtype="<f8").reshape(shape).astype(np.float64)
    missing = set(expected) - set(params)
    if missing:
        raise ModelFormatError(f"missing tensors {sorted(missing)}")
    return TrainedModel(
        config,
        params,
        LabelSet.from_dict(header["labels"]),
        header.get("vocab_fingerprint"),
        header.get("history", []),
    )
