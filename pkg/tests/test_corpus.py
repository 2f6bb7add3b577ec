import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leapmood import corpus
from leapmood.corpus import DAILYDIALOG_LABELS, ChatMessage, Dialogue, LabelSet, MoodGroup
from leapmood.errors import CorpusFormatError, InputError


def write_pair(tmp_path, text, labels):
    t, lab = tmp_path / "text.txt", tmp_path / "labels.txt"
    t.write_text(text, encoding="utf-8")
    lab.write_text(labels, encoding="utf-8")
    return t, lab


def test_load_one_dialogue(tmp_path):
    t, lab = write_pair(tmp_path, "Hi ! __eou__ Great news ! __eou__\n", "0 4\n")
    (d,) = corpus.load_dailydialog(t, lab)
    assert d.utterances == ("Hi !", "Great news !")
    assert [DAILYDIALOG_LABELS.name_of(i) for i in d.labels] == ["other", "happy"]


def test_load_empty_pair(tmp_path):
    t, lab = write_pair(tmp_path, "", "")
    assert corpus.load_dailydialog(t, lab) == []


def test_count_mismatch_names_line(tmp_path):
    t, lab = write_pair(tmp_path, "a __eou__ b __eou__\nx __eou__ y __eou__ z __eou__\n", "0 1\n2 3\n")
    with pytest.raises(CorpusFormatError) as exc:
        corpus.load_dailydialog(t, lab)
    assert exc.value.line == 2
    assert "line 2" in str(exc.value)


def test_unknown_label_id(tmp_path):
    t, lab = write_pair(tmp_path, "a __eou__\n", "9\n")
    with pytest.raises(CorpusFormatError, match="unknown label id 9"):
        corpus.load_dailydialog(t, lab)


def test_line_count_mismatch(tmp_path):
    t, lab = write_pair(tmp_path, "a __eou__\nb __eou__\n", "0\n")
    with pytest.raises(CorpusFormatError):
        corpus.load_dailydialog(t, lab)


def test_dailydialog_round_trip(tmp_path):
    dialogues = [Dialogue(("hello there", "fine , thanks"), (0, 4)), Dialogue(("ugh",), (1,))]
    corpus.write_dailydialog(dialogues, tmp_path / "t.txt", tmp_path / "l.txt")
    assert corpus.load_dailydialog(tmp_path / "t.txt", tmp_path / "l.txt") == dialogues


def test_dialogue_invariants():
    with pytest.raises(InputError):
        Dialogue(("a", "b"), (0,))
    with pytest.raises(InputError):
        Dialogue((), ())


def test_label_set_rejects_duplicates():
    with pytest.raises(InputError):
        LabelSet.from_names(["a", "a"])
    ls = LabelSet.from_names(["x", "y"], excluded=["x"])
    assert ls.excluded_for_averaging == frozenset({0})
    assert LabelSet.from_dict(ls.to_dict()) == ls


CSV = "timestamp,text,emotion,group\n100,yay!,happy,1\n50,oh no,fear,1\n"


def test_chat_sorted_by_timestamp():
    msgs = corpus.parse_chat_csv(CSV)
    assert [m.timestamp for m in msgs] == [50, 100]
    assert msgs[0].emotion_label == DAILYDIALOG_LABELS.id_of("fear")


def test_chat_empty_body():
    assert corpus.parse_chat_csv("timestamp,text,emotion,group\n") == []


def test_chat_unknown_emotion_names_row():
    with pytest.raises(CorpusFormatError) as exc:
        corpus.parse_chat_csv("timestamp,text,emotion,group\n1,hi,joyful,\n")
    assert exc.value.line == 1


def test_chat_bad_timestamp():
    with pytest.raises(CorpusFormatError) as exc:
        corpus.parse_chat_csv("timestamp,text,emotion,group\n1,a,,\nnoon,b,,\n")
    assert exc.value.line == 2


def test_chat_optional_fields_and_quoting():
    text = 'timestamp,text,emotion,group\n5,"hello, ""you""",,\n'
    (m,) = corpus.parse_chat_csv(text)
    assert m.text == 'hello, "you"'
    assert m.emotion_label is None and m.group_id is None


def test_chat_stable_on_ties():
    msgs = corpus.parse_chat_csv("timestamp,text,emotion,group\n7,first,,\n7,second,,\n3,zero,,\n")
    assert [m.text for m in msgs] == ["zero", "first", "second"]


def test_chat_file_round_trip(tmp_path):
    msgs = corpus.parse_chat_csv(CSV)
    corpus.write_chat_csv(msgs, tmp_path / "c.csv")
    assert corpus.load_chat_csv(tmp_path / "c.csv") == msgs


def _msgs(minutes):
    return [ChatMessage(int(m * 60), f"m{i}") for i, m in enumerate(minutes)]


def test_window_one_group():
    (g,) = corpus.group_by_window(_msgs([0, 30, 59]), 60)
    assert len(g.messages) == 3


def test_window_two_groups():
    groups = corpus.group_by_window(_msgs([0, 61]), 60)
    assert [len(g.messages) for g in groups] == [1, 1]


def test_window_singleton():
    (g,) = corpus.group_by_window([ChatMessage(1234, "x")])
    assert g.window_start == 1234 and len(g.messages) == 1


def test_window_anchor_moves_with_group():
    # 0 opens a window, 60 opens the next (anchored at 60), 100 is still inside it
    groups = corpus.group_by_window(_msgs([0, 60, 100, 121]), 60)
    assert [[m.text for m in g.messages] for g in groups] == [["m0"], ["m1", "m2"], ["m3"]]


def test_window_override_shifts_boundaries():
    msgs = _msgs([0, 20, 35, 50, 70])
    assert [len(g.messages) for g in corpus.group_by_window(msgs, 60)] == [4, 1]
    assert [len(g.messages) for g in corpus.group_by_window(msgs, 30)] == [2, 2, 1]


def test_window_rejects_unsorted():
    with pytest.raises(InputError):
        corpus.group_by_window(_msgs([5, 1]))


def test_window_empty():
    assert corpus.group_by_window([]) == []


def test_mood_group_invariants():
    with pytest.raises(InputError):
        MoodGroup((), 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 20_000), max_size=40), st.integers(1, 120))
def test_window_partition_and_bound(stamps, window):
    msgs = [ChatMessage(t, str(i)) for i, t in enumerate(sorted(stamps))]
    groups = corpus.group_by_window(msgs, window)
    assert [m for g in groups for m in g.messages] == msgs
    for g in groups:
        assert g.messages[0].timestamp == g.window_start
        assert g.messages[-1].timestamp - g.window_start < window * 60


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**9), st.text(st.characters(blacklist_characters="\x00"), max_size=30),
                          st.one_of(st.none(), st.integers(0, 6)), st.one_of(st.none(), st.integers(-5, 99))),
                max_size=15))
def test_chat_csv_round_trip(rows):
    msgs = sorted((ChatMessage(*r) for r in rows), key=lambda m: m.timestamp)
    assert corpus.parse_chat_csv(corpus.format_chat_csv(msgs)) == msgs


def test_label_histogram():
    ds = [Dialogue(("a", "b"), (0, 4)), Dialogue(("c",), (4,))]
    hist = corpus.label_histogram(ds, DAILYDIALOG_LABELS)
    assert hist["happy"] == 2 and hist["other"] == 1 and sum(hist.values()) == 3
    assert np.all(np.array(list(hist.values())) >= 0)
