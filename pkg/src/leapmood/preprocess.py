"""Text preprocessing: cleaning, acronym expansion, tokenization, vocabularies,
Soundex phonetic hashing and fixed-shape sequence encoding.

The typical flow is::

    tokens = tokenize(expand_acronyms(clean_text(raw), acronyms))
    vocab = build_vocab(token_streams, max_size=30000)
    enc = encode_utterance(tokens, vocab, CharVocab(), max_seq_len=100, max_char_len=10)

Out-of-vocabulary tokens are recovered through their Soundex code: if some
in-vocabulary token shares the code, the most frequent such token stands in.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, ModelFormatError

PAD_TOKEN, UNK_TOKEN, NUM_TOKEN = "<pad>", "<unk>", "<num>"
PAD_ID, UNK_ID, NUM_ID = 0, 1, 2
RESERVED = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID, NUM_TOKEN: NUM_ID}

NO_CODE = "0000"
ACRONYM_CAP = 100

# apostrophes survive cleaning; everything else outside [a-z0-9 ] is dropped
_DISALLOWED = re.compile(r"[^a-z0-9' ]+")
_DIGITS = re.compile(r"[0-9]+")
_SPACE = re.compile(r"\s+")

_SOUNDEX_DIGIT = {
    **dict.fromkeys("bfpv", "1"),
    **dict.fromkeys("cgjkqsxz", "2"),
    **dict.fromkeys("dt", "3"),
    "l": "4",
    **dict.fromkeys("mn", "5"),
    "r": "6",
}


def clean_text(raw: str) -> str:
    """Lowercase, strip symbols and emoji, tag digit runs as ``<num>``.

    Idempotent: an existing ``<num>`` tag is preserved.
    """
    text = _SPACE.sub(" ", raw.lower())
    # protect tags from the symbol filter by turning them back into digits
    text = text.replace(NUM_TOKEN, " 0 ")
    text = _DISALLOWED.sub("", text)
    text = _DIGITS.sub(f" {NUM_TOKEN} ", text)
    return _SPACE.sub(" ", text).strip()


def expand_acronyms(cleaned: str, acronyms: Mapping[str, str]) -> str:
    return " ".join(acronyms.get(tok, tok) for tok in cleaned.split())


def tokenize(text: str) -> list[str]:
    return text.split()


def validate_acronyms(entries: Mapping[str, str], cap: int = ACRONYM_CAP) -> dict[str, str]:
    if len(entries) > cap:
        raise InputError(f"acronym map has {len(entries)} entries, cap is {cap}")
    for key, value in entries.items():
        if key != key.lower() or len(key.split()) != 1 or key != key.strip():
            raise InputError(f"acronym key {key!r} must be a single lowercase token")
        if not isinstance(value, str) or not value.strip():
            raise InputError(f"acronym {key!r} has an empty expansion")
    return dict(entries)


def load_acronyms(path=None, cap: int = ACRONYM_CAP) -> dict[str, str]:
    """Load an acronym JSON object; defaults to the bundled 100-entry map."""
    if path is None:
        text = resources.files("leapmood.data").joinpath("acronyms.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return validate_acronyms(json.loads(text), cap)


def preprocess_text(raw: str, acronyms: Mapping[str, str]) -> list[str]:
    return tokenize(expand_acronyms(clean_text(raw), acronyms))


def soundex(token: str) -> str:
    """American Soundex code of ``token`` (letter + three digits).

    Non-letters are ignored. Tokens without letters, and tag tokens such as
    ``<num>``, map to the sentinel ``"0000"``.
    """
    if token.startswith("<") and token.endswith(">"):
        return NO_CODE
    letters = [c for c in token.lower() if "a" <= c <= "z"]
    if not letters:
        return NO_CODE
    first = letters[0]
    digits = []
    prev = _SOUNDEX_DIGIT.get(first, "")
    for c in letters[1:]:
        if c in "hw":
            continue
        d = _SOUNDEX_DIGIT.get(c, "")
        if not d:
            prev = ""
            continue
        if d != prev:
            digits.append(d)
        prev = d
    return first.upper() + "".join(digits)[:3].ljust(3, "0")


class Vocab:
    """Frequency-ranked word table with a Soundex index for OOV recovery."""

    def __init__(self, words: Sequence[str], max_size: int, phonetic_index: Mapping[str, Sequence[int]] | None = None):
        self.max_size = int(max_size)
        self.id_to_word: list[str] = [None] * len(RESERVED)
        for tok, i in RESERVED.items():
            self.id_to_word[i] = tok
        self.id_to_word.extend(words)
        self.word_to_id = {w: i for i, w in enumerate(self.id_to_word)}
        if len(self.word_to_id) != len(self.id_to_word):
            raise InputError("vocabulary words must be unique and disjoint from reserved tokens")
        if len(words) > self.max_size:
            raise InputError(f"{len(words)} words exceed max_size {self.max_size}")
        if phonetic_index is None:
            # words arrive frequency-ordered, so id order is frequency order
            index: dict[str, list[int]] = {}
            for i in range(len(RESERVED), len(self.id_to_word)):
                index.setdefault(soundex(self.id_to_word[i]), []).append(i)
            phonetic_index = index
        self.phonetic_index = {k: list(v) for k, v in phonetic_index.items()}

    def __len__(self) -> int:
        return len(self.id_to_word)

    def __contains__(self, token: str) -> bool:
        return token in self.word_to_id

    def resolve(self, token: str) -> tuple[int, str]:
        """Map a token to an id; also say how: ``vocab``, ``phonetic`` or ``unk``."""
        i = self.word_to_id.get(token)
        if i is not None:
            return i, "vocab"
        code = soundex(token)
        if code != NO_CODE:
            matches = self.phonetic_index.get(code)
            if matches:
                return matches[0], "phonetic"
        return UNK_ID, "unk"

    def to_dict(self) -> dict:
        return {
            "max_size": self.max_size,
            "reserved": dict(RESERVED),
            "words": self.id_to_word[len(RESERVED):],
            "phonetic_index": self.phonetic_index,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        if d.get("reserved") != RESERVED:
            raise ModelFormatError(f"vocabulary reserved ids {d.get('reserved')} != {RESERVED}")
        return cls(d["words"], d["max_size"], d["phonetic_index"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"vocabulary file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(d)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int) -> Vocab:
    """Keep the ``max_size`` most frequent tokens (ties: lexicographic)."""
    if max_size < 1:
        raise InputError(f"max_size must be >= 1, got {max_size}")
    counts = Counter(tok for tokens in corpus for tok in tokens if tok not in RESERVED)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    return Vocab([w for w, _ in ranked], max_size)


class CharVocab:
    """Fixed 30-symbol character table: a-z, apostrophe, ``<``, ``>`` and ``#``.

    Digits are folded onto ``#``; anything else is UNK.
    """

    PAD, UNK = 0, 1
    CHARS = "abcdefghijklmnopqrstuvwxyz'<>#"

    def __init__(self):
        self.char_to_id = {c: i + 2 for i, c in enumerate(self.CHARS)}
        self.id_to_char = ["<pad>", "<unk>", *self.CHARS]

    def __len__(self) -> int:
        return len(self.id_to_char)

    def char_id(self, c: str) -> int:
        if c.isdigit():
            c = "#"
        return self.char_to_id.get(c, self.UNK)

    def encode(self, token: str, max_char_len: int) -> list[int]:
        ids = [self.char_id(c) for c in token[:max_char_len]]
        return ids + [self.PAD] * (max_char_len - len(ids))


@dataclass
class EncodedUtterance:
    word_ids: np.ndarray  # (max_seq_len,)
    char_ids: np.ndarray  # (max_seq_len, max_char_len)
    valid_len: int


@dataclass
class EncodedDialogue:
    word_ids: np.ndarray  # (U, max_seq_len)
    char_ids: np.ndarray  # (U, max_seq_len, max_char_len)
    lengths: np.ndarray  # (U,)
    labels: np.ndarray | None = None  # (U,)

    def __len__(self) -> int:
        return len(self.lengths)

    @classmethod
    def stack(cls, utterances: Sequence[EncodedUtterance], labels=None) -> "EncodedDialogue":
        return cls(
            np.stack([u.word_ids for u in utterances]),
            np.stack([u.char_ids for u in utterances]),
            np.array([u.valid_len for u in utterances], dtype=np.int64),
            None if labels is None else np.asarray(labels, dtype=np.int64),
        )


def encode_utterance(
    tokens: Sequence[str],
    vocab: Vocab,
    cvocab: CharVocab,
    max_seq_len: int = 100,
    max_char_len: int = 10,
    stats: Counter | None = None,
) -> EncodedUtterance:
    """Encode the first ``max_seq_len`` tokens; pad the tail.

    Char ids spell the original surface token, so a misspelling that was
    phonetically recovered at the word level stays visible to the char
    channel. ``stats`` (if given) counts resolution outcomes.
    """
    kept = list(tokens[:max_seq_len])
    word_ids = np.full(max_seq_len, PAD_ID, dtype=np.int64)
    char_ids = np.full((max_seq_len, max_char_len), CharVocab.PAD, dtype=np.int64)
    for t, tok in enumerate(kept):
        word_ids[t], how = vocab.resolve(tok)
        if stats is not None:
            stats[how] += 1
        char_ids[t] = cvocab.encode(tok, max_char_len)
    return EncodedUtterance(word_ids, char_ids, len(kept))


class TextEncoder:
    """Raw text in, :class:`EncodedDialogue` out."""

    def __init__(self, vocab: Vocab, acronyms: Mapping[str, str] | None = None,
                 cvocab: CharVocab | None = None, max_seq_len: int = 100, max_char_len: int = 10):
        self.vocab = vocab
        self.acronyms = load_acronyms() if acronyms is None else dict(acronyms)
        self.cvocab = cvocab or CharVocab()
        self.max_seq_len = max_seq_len
        self.max_char_len = max_char_len

    def tokens(self, raw: str) -> list[str]:
        return preprocess_text(raw, self.acronyms)

    def encode_texts(self, texts: Sequence[str], labels=None, stats: Counter | None = None) -> EncodedDialogue:
        if not texts:
            raise InputError("cannot encode an empty conversation")
        utts = [
            encode_utterance(self.tokens(t), self.vocab, self.cvocab, self.max_seq_len, self.max_char_len, stats)
            for t in texts
        ]
        return EncodedDialogue.stack(utts, labels)
