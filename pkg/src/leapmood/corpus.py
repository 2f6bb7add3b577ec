"""Dataset loaders and time-window grouping.

Two on-disk formats are supported.

DailyDialog (two parallel files)::

    dialogues_text.txt     Hi ! __eou__ Great news ! __eou__
    dialogues_emotion.txt  0 4

Line *i* of the text file holds dialogue *i*; every utterance is terminated by
the ``__eou__`` sentinel.  Line *i* of the label file holds one integer label
id per utterance, in :data:`DAILYDIALOG_LABELS` order (``0`` is ``other``).

Chat CSV (UTF-8, RFC 4180 quoting)::

    timestamp,text,emotion,group
    1650000000,"yay! tmrws a holiday",happy,1
    1650000300,"he hit my car and ran away",,

``timestamp`` is integer epoch seconds, ``emotion`` a label *name* or empty,
``group`` an integer or empty.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorpusFormatError, InputError

logger = logging.getLogger(__name__)

EOU = "__eou__"
CHAT_HEADER = ("timestamp", "text", "emotion", "group")


class Mood(str, enum.Enum):
    GOOD = "GOOD"
    BAD = "BAD"


@dataclass(frozen=True)
class LabelSet:
    """Ordered emotion label names plus the ids left out of metric averages."""

    names: tuple[str, ...]
    excluded_for_averaging: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "excluded_for_averaging", frozenset(self.excluded_for_averaging))
        if len(set(self.names)) != len(self.names):
            raise InputError(f"duplicate label names in {self.names}")
        bad = [i for i in self.excluded_for_averaging if not 0 <= i < len(self.names)]
        if bad:
            raise InputError(f"excluded label ids {bad} out of range")

    def __len__(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"unknown label name {name!r}") from None

    def name_of(self, label_id: int) -> str:
        return self.names[label_id]

    def contains_id(self, label_id: int) -> bool:
        return 0 <= label_id < len(self.names)

    @classmethod
    def from_names(cls, names: Sequence[str], excluded: Iterable[str] = ()) -> "LabelSet":
        names = tuple(names)
        return cls(names, frozenset(names.index(n) for n in excluded))

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "excluded": [self.names[i] for i in sorted(self.excluded_for_averaging)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSet":
        return cls.from_names(d["names"], d.get("excluded", ()))


DAILYDIALOG_LABELS = LabelSet(
    ("other", "anger", "disgust", "fear", "happy", "sad", "surprise"),
    frozenset({0}),
)


@dataclass(frozen=True)
class Dialogue:
    utterances: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        if not self.utterances:
            raise InputError("a dialogue needs at least one utterance")
        if len(self.utterances) != len(self.labels):
            raise InputError(
                f"{len(self.utterances)} utterances but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class ChatMessage:
    timestamp: int
    text: str
    emotion_label: int | None = None
    group_id: int | None = None

    def __post_init__(self):
        if self.timestamp < 0:
            raise InputError(f"negative timestamp {self.timestamp}")


@dataclass
class MoodGroup:
    messages: tuple[ChatMessage, ...]
    window_start: int
    mood_label: Mood | None = None
    group_id: int | None = None

    def __post_init__(self):
        self.messages = tuple(self.messages)
        if not self.messages:
            raise InputError("a mood group needs at least one message")

    @property
    def texts(self) -> list[str]:
        return [m.text for m in self.messages]

    def __len__(self) -> int:
        return len(self.messages)


def split_utterances(line: str) -> list[str]:
    parts = [p.strip() for p in line.split(EOU)]
    # the sentinel terminates each utterance, so the final fragment is empty
    if parts and parts[-1] == "":
        parts.pop()
    return parts


def load_dailydialog(text_path, labels_path, label_set: LabelSet = DAILYDIALOG_LABELS) -> list[Dialogue]:
    """Read a DailyDialog text/label file pair.

    Raises:
        CorpusFormatError: on a line-count mismatch between the files, an
            utterance/label count mismatch, a non-integer label, or a label id
            outside ``label_set``. The error carries the 1-based line number.
    """
    text_path, labels_path = Path(text_path), Path(labels_path)
    text_lines = text_path.read_text(encoding="utf-8").splitlines()
    label_lines = labels_path.read_text(encoding="utf-8").splitlines()
    # tolerate trailing blank lines, nothing else
    while text_lines and not text_lines[-1].strip():
        text_lines.pop()
    while label_lines and not label_lines[-1].strip():
        label_lines.pop()
    if len(text_lines) != len(label_lines):
        raise CorpusFormatError(
            f"{len(text_lines)} dialogue lines but {len(label_lines)} label lines",
            path=labels_path,
            line=min(len(text_lines), len(label_lines)) + 1,
        )

    dialogues = []
    for lineno, (text, labels) in enumerate(zip(text_lines, label_lines), start=1):
        utterances = split_utterances(text)
        try:
            ids = [int(tok) for tok in labels.split()]
        except ValueError:
            raise CorpusFormatError(f"non-integer label in {labels!r}", path=labels_path, line=lineno) from None
        if len(utterances) != len(ids) or not ids:
            raise CorpusFormatError(
                f"{len(utterances)} utterances but {len(ids)} labels",
                path=text_path,
                line=lineno,
            )
        for i in ids:
            if not label_set.contains_id(i):
                raise CorpusFormatError(f"unknown label id {i}", path=labels_path, line=lineno)
        dialogues.append(Dialogue(tuple(utterances), tuple(ids)))

    hist = label_histogram(dialogues, label_set)
    logger.info("loaded %d dialogues from %s; label histogram %s", len(dialogues), text_path, hist)
    return dialogues


def write_dailydialog(dialogues: Sequence[Dialogue], text_path, labels_path) -> None:
    with open(text_path, "w", encoding="utf-8") as ft, open(labels_path, "w", encoding="utf-8") as fl:
        for d in dialogues:
            ft.write("".join(f"{u} {EOU} " for u in d.utterances).rstrip() + "\n")
            fl.write(" ".join(str(x) for x in d.labels) + "\n")


def label_histogram(dialogues: Iterable[Dialogue], label_set: LabelSet) -> dict[str, int]:
    counts = Counter(label for d in dialogues for label in d.labels)
    return {name: counts.get(i, 0) for i, name in enumerate(label_set.names)}


def load_chat_csv(path, label_set: LabelSet = DAILYDIALOG_LABELS) -> list[ChatMessage]:
    """Load a chat CSV and return its messages sorted by timestamp (stable)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_chat(fh, label_set, path)


def parse_chat_csv(text: str, label_set: LabelSet = DAILYDIALOG_LABELS) -> list[ChatMessage]:
    return _parse_chat(io.StringIO(text, newline=""), label_set, None)


def _parse_chat(fh, label_set: LabelSet, path) -> list[ChatMessage]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CHAT_HEADER:
        raise CorpusFormatError(f"expected header {','.join(CHAT_HEADER)}, got {header}", path=path, line=0)
    messages = []
    for row_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != len(CHAT_HEADER):
            raise CorpusFormatError(f"expected 4 fields, got {len(row)}", path=path, line=row_no)
        ts_raw, text, emotion, group = row
        try:
            ts = int(ts_raw.strip())
        except ValueError:
            raise CorpusFormatError(f"unparsable timestamp {ts_raw!r}", path=path, line=row_no) from None
        if ts < 0:
            raise CorpusFormatError(f"negative timestamp {ts}", path=path, line=row_no)
        emotion = emotion.strip()
        if emotion:
            if emotion not in label_set.names:
                raise CorpusFormatError(f"unknown emotion {emotion!r}", path=path, line=row_no)
            label = label_set.id_of(emotion)
        else:
            label = None
        group = group.strip()
        try:
            gid = int(group) if group else None
        except ValueError:
            raise CorpusFormatError(f"unparsable group {group!r}", path=path, line=row_no) from None
        messages.append(ChatMessage(ts, text, label, gid))
    # sorted() is stable, so equal timestamps keep file order
    return sorted(messages, key=lambda m: m.timestamp)


def format_chat_csv(messages: Iterable[ChatMessage], label_set: LabelSet = DAILYDIALOG_LABELS) -> str:
    buf = io.StringIO(newline="")
    # RFC 4180 CRLF rows; with a bare "\n" terminator csv would leave a lone "\r" unquoted
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CHAT_HEADER)
    for m in messages:
        writer.writerow([
            m.timestamp,
            m.text,
            "" if m.emotion_label is None else label_set.name_of(m.emotion_label),
            "" if m.group_id is None else m.group_id,
        ])
    return buf.getvalue()


def write_chat_csv(messages: Iterable[ChatMessage], path, label_set: LabelSet = DAILYDIALOG_LABELS) -> None:
    Path(path).write_text(format_chat_csv(messages, label_set), encoding="utf-8", newline="")


def group_by_window(messages: Sequence[ChatMessage], window_minutes: int = 60) -> list[MoodGroup]:
    """Split time-sorted messages into tumbling windows.

    Each group is anchored at its first message; a message opens a new group
    once its timestamp reaches ``window_start + window_minutes * 60``.
    """
    if window_minutes < 1:
        raise InputError(f"window_minutes must be >= 1, got {window_minutes}")
    width = window_minutes * 60
    groups: list[MoodGroup] = []
    current: list[ChatMessage] = []
    start = 0
    prev_ts = None
    for m in messages:
        if prev_ts is not None and m.timestamp < prev_ts:
            raise InputError("messages must be sorted by timestamp")
        prev_ts = m.timestamp
        if current and m.timestamp >= start + width:
            groups.append(MoodGroup(tuple(current), start, group_id=len(groups)))
            current = []
        if not current:
            start = m.timestamp
        current.append(m)
    if current:
        groups.append(MoodGroup(tuple(current), start, group_id=len(groups)))
    return groups
