"""Synthetic corpora for tests, demos and smoke runs.

Utterances are built from small per-emotion keyword lexicons mixed with
neutral filler words. Keywords are sometimes stretched ("happyyyy") or
misspelled so that phonetic OOV recovery has something to do, and chat
messages carry the odd emoji, number or acronym.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import DAILYDIALOG_LABELS, ChatMessage, Dialogue, LabelSet, Mood, write_chat_csv, write_dailydialog

LEXICON = {
    "other": ["okay", "table", "meeting", "report", "weather", "train", "lunch", "office", "schedule", "paper"],
    "anger": ["furious", "angry", "hate", "annoyed", "outraged", "rage"],
    "disgust": ["gross", "disgusting", "nasty", "revolting", "yuck", "filthy"],
    "fear": ["scared", "afraid", "terrified", "panic", "frightened", "nervous"],
    "happy": ["happy", "great", "awesome", "wonderful", "delighted", "glad"],
    "sad": ["sad", "crying", "miserable", "lonely", "depressed", "heartbroken"],
    "surprise": ["wow", "unbelievable", "shocked", "amazing", "unexpected", "whoa"],
}
FILLER = ["i", "am", "so", "really", "today", "the", "this", "is", "feel", "you", "we", "it", "was", "about", "now"]
DECOR = ["!", "!!", ".", "?", " :)", " 😀", " 😡", " lol", " 2day", " at 5"]

POSITIVE = ("happy", "surprise")
NEGATIVE = ("anger", "disgust", "fear", "sad")


def stretch(word: str, rng: np.random.Generator) -> str:
    """Repeat one letter of ``word`` a few times; Soundex code is unchanged."""
    i = int(rng.integers(len(word)))
    return word[:i + 1] + word[i] * int(rng.integers(1, 5)) + word[i + 1:]


def utterance(label: str, rng: np.random.Generator, stretch_prob: float = 0.2, decorate: bool = False) -> str:
    words = [FILLER[i] for i in rng.choice(len(FILLER), size=int(rng.integers(2, 5)), replace=False)]
    n_kw = int(rng.integers(1, 3))
    for _ in range(n_kw):
        kw = LEXICON[label][int(rng.integers(len(LEXICON[label])))]
        if rng.random() < stretch_prob:
            kw = stretch(kw, rng)
        words.insert(int(rng.integers(len(words) + 1)), kw)
    if rng.random() < 0.3:
        words[0] = words[0].capitalize()
    text = " ".join(words)
    if decorate:
        text += DECOR[int(rng.integers(len(DECOR)))]
    return text


def make_dialogues(n: int, seed: int = 0, labels: LabelSet = DAILYDIALOG_LABELS,
                   min_len: int = 2, max_len: int = 6, label_probs=None, stretch_prob: float = 0.2) -> list[Dialogue]:
    """``n`` dialogues whose utterance labels follow ``label_probs`` (uniform by default)."""
    rng = np.random.default_rng(seed)
    names = list(labels.names)
    p = None if label_probs is None else np.asarray(label_probs, dtype=float) / np.sum(label_probs)
    out = []
    for _ in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        ids = rng.choice(len(names), size=length, p=p)
        out.append(Dialogue(tuple(utterance(names[i], rng, stretch_prob) for i in ids), tuple(int(i) for i in ids)))
    return out


def make_chat(n_groups: int, seed: int = 0, labels: LabelSet = DAILYDIALOG_LABELS,
              window_minutes: int = 60, min_msgs: int = 2, max_msgs: int = 6, purity: float = 0.8,
              start: int = 1_650_000_000) -> tuple[list[ChatMessage], list[Mood]]:
    """Chat messages in well-separated time windows with a planted mood each.

    A GOOD window draws ``purity`` of its messages from positive emotions, a
    BAD window from negative ones; the rest are neutral ``other`` chatter.
    Windows start ``2 * window_minutes`` apart so grouping recovers them.
    """
    rng = np.random.default_rng(seed)
    messages, moods = [], []
    t0 = start
    for g in range(n_groups):
        mood = Mood.GOOD if rng.random() < 0.5 else Mood.BAD
        pool = POSITIVE if mood is Mood.GOOD else NEGATIVE
        moods.append(mood)
        n = int(rng.integers(min_msgs, max_msgs + 1))
        offsets = np.sort(rng.integers(0, window_minutes * 60 - 1, size=n))
        offsets[0] = 0
        for off in offsets:
            name = pool[int(rng.integers(len(pool)))] if rng.random() < purity else "other"
            messages.append(ChatMessage(int(t0 + off), utterance(name, rng, decorate=True), labels.id_of(name), g))
        t0 += 2 * window_minutes * 60
    return messages, moods


SMALL_MODEL = {
    "hyper": {"batch_size": 16, "epochs": 30, "word_emb_dim": 16, "char_emb_dim": 8, "char_lstm_hidden": 8,
              "spatial_dropout": 0.1, "lstm_dropout": 0.1, "lstm_recurrent_dropout": 0.1,
              "bilstm_hidden": 16, "bilstm_recurrent_dropout": 0.1},
    "learning_rate": 0.01,
}


def write_workspace(directory, seed: int = 0, n_train: int = 120, n_val: int = 30, n_eval: int = 30,
                    n_fit_groups: int = 60, n_chat_groups: int = 60) -> Path:
    """Write a complete synthetic run directory and return its ``run.json``.

    The directory gets train/val/eval DailyDialog file pairs, a file of
    unlabelled conversations for ``predict``, two chat logs (one to fit the
    mood clusters, one to score) and a run config with a small model. The
    planted chat moods go to ``chat_moods.json``.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dialogues = make_dialogues(n_train + n_val + n_eval, seed=seed)
    splits = {"train": dialogues[:n_train], "val": dialogues[n_train:n_train + n_val],
              "eval": dialogues[n_train + n_val:]}
    paths = {}
    for name, part in splits.items():
        write_dailydialog(part, d / f"{name}.txt", d / f"{name}_labels.txt")
        paths[f"{name}_text"], paths[f"{name}_labels"] = f"{name}.txt", f"{name}_labels.txt"
    (d / "predict.txt").write_text(
        "".join(" ".join(f"{u} __eou__" for u in x.utterances) + "\n" for x in splits["eval"][:5]), encoding="utf-8")
    fit_msgs, _ = make_chat(n_fit_groups, seed=seed + 1)
    chat_msgs, moods = make_chat(n_chat_groups, seed=seed + 2)
    write_chat_csv(fit_msgs, d / "chat_fit.csv")
    write_chat_csv(chat_msgs, d / "chat.csv")
    (d / "chat_moods.json").write_text(json.dumps([m.value for m in moods]) + "\n", encoding="utf-8")
    paths.update(predict_text="predict.txt", chat="chat.csv", fit_chat="chat_fit.csv", out_dir="out")
    config = {
        "seed": seed,
        "paths": paths,
        "preprocess": {"vocab_size": 2000, "max_seq_len": 12, "max_char_len": 10},
        "model": SMALL_MODEL,
        "train": {"patience": 5, "metric": "micro_f1"},
        "ga": {"population_size": 7, "max_generations": 10, "evaluator": "surrogate"},
        "mood": {"window_minutes": 60, "k": 2},
        "report": {"digits": 2},
    }
    cfg_path = d / "run.json"
    cfg_path.write_text(json.dumps(config, indent=1) + "\n", encoding="utf-8")
    return cfg_path
