import time

import numpy as np
import pytest

from leapmood import erc
from leapmood.preprocess import EncodedDialogue

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if report.skipped:
            status = "BLOCKED"
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        else:
            status = "PASS" if report.passed else "FAIL"
            reason = ""
        _ACCEPTANCE[number] = (title, status, report.duration, reason)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, duration, reason = _ACCEPTANCE[number]
        line = f"criterion {number:>2} {status:<7} {duration:7.2f}s  {title}"
        if reason:
            line += f"  ({reason.removeprefix('Skipped: ')})"
        terminalreporter.write_line(line)


class Budget:
    """Wall-clock limit checked at the end of an acceptance test."""

    def __init__(self, seconds):
        self.seconds = seconds
        self.start = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.start

    def check(self):
        assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


def tiny_config(rng=None, dropout=0.0, **over):
    """A very small model so finite differences stay cheap."""
    hp = dict(batch_size=2, epochs=1, word_emb_dim=3, char_emb_dim=2, char_lstm_hidden=3, bilstm_hidden=2,
              spatial_dropout=dropout, lstm_dropout=dropout, lstm_recurrent_dropout=dropout,
              bilstm_recurrent_dropout=dropout)
    hp.update(over.pop("hyper", {}))
    kw = dict(vocab_size=9, char_vocab_size=6, max_seq_len=4, max_char_len=3, label_count=3)
    kw.update(over)
    return erc.ModelConfig(hyper=erc.HyperParams(**hp), **kw)


def random_dialogue(rng, cfg, n_utt, min_len=0):
    T, C = cfg.max_seq_len, cfg.max_char_len
    lens = rng.integers(min_len, T + 1, size=n_utt)
    w = np.zeros((n_utt, T), dtype=np.int64)
    c = np.zeros((n_utt, T, C), dtype=np.int64)
    for u in range(n_utt):
        w[u, :lens[u]] = rng.integers(1, cfg.vocab_size, size=lens[u])
        for t in range(lens[u]):
            k = rng.integers(1, C + 1)
            c[u, t, :k] = rng.integers(1, cfg.char_vocab_size, size=k)
    return EncodedDialogue(w, c, lens, rng.integers(0, cfg.label_count, size=n_utt))


def numeric_grad(f, x, eps=1e-5):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def rel_error(analytic, numeric):
    """Largest elementwise |a - n| / max(|a| + |n|, 1e-5).

    The floor keeps finite-difference noise (about 1e-10) on near-zero
    entries from reading as a large relative error.
    """
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    err = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-5)
    return float(err.max()) if err.size else 0.0
