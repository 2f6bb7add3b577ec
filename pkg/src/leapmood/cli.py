"""Command-line entry point: ``leapmood <command> --config run.json``.

Commands: preprocess, train, eval, predict, tune, mood. Every command reads
one JSON run config; relative paths in it resolve against the config file's
directory. Outputs go to ``--out`` (or ``paths.out_dir``). Exit status is 0
on success, 2 for bad input and 3 for numeric failure.

A run config looks like::

    {
      "seed": 7,
      "paths": {"train_text": "train.txt", "train_labels": "train_labels.txt",
                "val_text": "val.txt", "val_labels": "val_labels.txt",
                "eval_text": "test.txt", "eval_labels": "test_labels.txt",
                "predict_text": "new.txt", "chat": "chat.csv", "fit_chat": "chat_fit.csv",
                "out_dir": "out"},
      "labels": {"names": ["other", "anger", ...], "excluded": ["other"]},
      "preprocess": {"vocab_size": 30000, "max_seq_len": 100, "max_char_len": 10},
      "model": {"hyper": {"bilstm_hidden": 57}, "learning_rate": 0.0001},
      "train": {"patience": 3, "metric": "micro_f1"},
      "ga": {"population_size": 7, "max_generations": 250, "evaluator": "surrogate"},
      "mood": {"window_minutes": 60, "k": 2},
      "report": {"digits": 2}
    }

Artifacts (``vocab``, ``model``, ``kmeans``) default to files in the output
directory, so the commands chain without extra configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import zipfile
from collections import Counter
from pathlib import Path

import numpy as np

from . import corpus, erc, ga, mood
from .corpus import DAILYDIALOG_LABELS, LabelSet
from .errors import EvaluatorError, InputError, NumericError
from .evaluation import metrics
from .preprocess import TextEncoder, Vocab, build_vocab, load_acronyms, preprocess_text

logger = logging.getLogger("leapmood")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SPLITS = ("train", "val", "eval")
DEFAULT_ARTIFACTS = {"vocab": "vocab.json", "model": "model.bin", "kmeans": "kmeans.json"}


class RunConfig:
    """A parsed run config plus the command-line overrides."""

    def __init__(self, data: dict, base_dir: Path, out_dir: Path | None = None, seed: int | None = None):
        if not isinstance(data, dict):
            raise InputError("run config must be a JSON object")
        self.data = data
        self.base_dir = base_dir
        paths = data.get("paths", {})
        if out_dir is None:
            out_dir = self._resolve(paths["out_dir"]) if "out_dir" in paths else Path.cwd()
        self.out_dir = Path(out_dir)
        self.seed = seed if seed is not None else data.get("seed")
        if self.seed is not None and (int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64):
            raise InputError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @classmethod
    def load(cls, path, out_dir=None, seed=None) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        return cls(data, path.parent, out_dir, seed)

    def _resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, name: str) -> dict:
        return dict(self.data.get(name, {}))

    def path(self, key: str, required: bool = True) -> Path | None:
        paths = self.data.get("paths", {})
        if key in paths:
            return self._resolve(paths[key])
        if key in DEFAULT_ARTIFACTS:
            return self.out_dir / DEFAULT_ARTIFACTS[key]
        if required:
            raise InputError(f"config is missing paths.{key}")
        return None

    def input_path(self, key: str, required: bool = True) -> Path | None:
        p = self.path(key, required)
        if p is not None and not p.exists():
            raise InputError(f"paths.{key}: {p} does not exist")
        return p

    def require_seed(self) -> int:
        if self.seed is None:
            raise InputError("a seed is required: pass --seed or set \"seed\" in the config")
        return int(self.seed)

    def labels(self) -> LabelSet:
        sec = self.section("labels")
        if not sec:
            return DAILYDIALOG_LABELS
        return LabelSet.from_names(sec["names"], sec.get("excluded", ()))

    def digits(self) -> int:
        return int(self.section("report").get("digits", 2))

    def acronyms(self) -> dict:
        return load_acronyms(self.path("acronyms", required=False))


# ------------------------------------------------------------------ helpers

def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


def _save_npz(path: Path, arrays: dict) -> None:
    """Like ``np.savez`` but with fixed zip timestamps, so reruns are byte-identical."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def _encoder(cfg: RunConfig, vocab: Vocab) -> TextEncoder:
    pre = cfg.section("preprocess")
    return TextEncoder(vocab, cfg.acronyms(), max_seq_len=int(pre.get("max_seq_len", 100)),
                       max_char_len=int(pre.get("max_char_len", 10)))


def _load_split(cfg: RunConfig, split: str, required: bool = True):
    text = cfg.input_path(f"{split}_text", required)
    if text is None:
        return None
    return corpus.load_dailydialog(text, cfg.input_path(f"{split}_labels"), cfg.labels())


def _encode(enc: TextEncoder, dialogues, stats=None):
    return [enc.encode_texts(d.utterances, d.labels, stats) for d in dialogues]


def _load_vocab(cfg: RunConfig) -> Vocab:
    return Vocab.load(cfg.input_path("vocab"))


def _model_config(cfg: RunConfig, vocab: Vocab) -> erc.ModelConfig:
    sec = cfg.section("model")
    pre = cfg.section("preprocess")
    hyper = erc.HyperParams(**sec.pop("hyper", {}))
    for derived in ("vocab_size", "max_seq_len", "max_char_len", "label_count"):
        sec.pop(derived, None)
    return erc.ModelConfig(
        hyper=hyper,
        vocab_size=len(vocab),
        max_seq_len=int(pre.get("max_seq_len", 100)),
        max_char_len=int(pre.get("max_char_len", 10)),
        label_count=len(cfg.labels()),
        **sec,
    )


def _load_model(cfg: RunConfig, vocab: Vocab) -> erc.TrainedModel:
    model = erc.load_model(cfg.input_path("model"))
    model.check_vocab(vocab.fingerprint())
    return model


# ----------------------------------------------------------------- commands

STATS_HEADER = ("split", "dialogues", "utterances", "tokens", "in_vocab", "phonetic", "unk",
                "oov_rate_before", "oov_rate_after")


def cmd_preprocess(cfg: RunConfig) -> None:
    train = _load_split(cfg, "train")
    if not train:
        raise InputError("training corpus is empty")
    acronyms = cfg.acronyms()
    pre = cfg.section("preprocess")
    vocab = build_vocab((preprocess_text(u, acronyms) for d in train for u in d.utterances),
                        int(pre.get("vocab_size", 30000)))
    enc = _encoder(cfg, vocab)

    arrays, rows = {}, []
    for split in SPLITS:
        dialogues = train if split == "train" else _load_split(cfg, split, required=False)
        if dialogues is None:
            continue
        stats = Counter()
        encoded = _encode(enc, dialogues, stats)
        arrays[f"{split}_word_ids"] = np.concatenate([e.word_ids for e in encoded])
        arrays[f"{split}_char_ids"] = np.concatenate([e.char_ids for e in encoded])
        arrays[f"{split}_lengths"] = np.concatenate([e.lengths for e in encoded])
        arrays[f"{split}_labels"] = np.concatenate([e.labels for e in encoded])
        arrays[f"{split}_offsets"] = np.cumsum([0] + [len(e) for e in encoded]).astype(np.int64)
        n_tok = sum(stats.values())
        oov_before = (stats["phonetic"] + stats["unk"]) / n_tok if n_tok else 0.0
        oov_after = stats["unk"] / n_tok if n_tok else 0.0
        rows.append([split, len(dialogues), int(arrays[f"{split}_lengths"].size), n_tok, stats["vocab"],
                     stats["phonetic"], stats["unk"], repr(oov_before), repr(oov_after)])

    vocab_path = cfg.path("vocab")
    vocab_path.parent.mkdir(parents=True, exist_ok=True)
    vocab.save(vocab_path)
    _save_npz(cfg.out_dir / "encoded.npz", arrays)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_HEADER)
    w.writerows(rows)
    _write_text(cfg.out_dir / "stats.csv", buf.getvalue())
    print(f"vocabulary of {len(vocab)} ids -> {vocab_path}")
    print(buf.getvalue(), end="")


def cmd_train(cfg: RunConfig) -> None:
    seed = cfg.require_seed()
    vocab = _load_vocab(cfg)
    enc = _encoder(cfg, vocab)
    train_set = _encode(enc, _load_split(cfg, "train"))
    val_set = _encode(enc, _load_split(cfg, "val"))
    sec = cfg.section("train")
    stopper = erc.EarlyStopping(int(sec.get("patience", 3)), sec.get("metric", "micro_f1"))
    model = erc.train(train_set, val_set, _model_config(cfg, vocab), rng=seed, early_stopping=stopper,
                      labels=cfg.labels(), vocab_fingerprint=vocab.fingerprint())
    model_path = cfg.path("model")
    model_path.parent.mkdir(parents=True, exist_ok=True)
    erc.save_model(model, model_path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("epoch", "train_loss", "val_accuracy", "val_micro_f1"))
    for h in model.history:
        w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["val_accuracy"]), repr(h["val_micro_f1"])])
    _write_text(cfg.out_dir / "train_history.csv", buf.getvalue())
    best = max(model.history, key=lambda h: h["val_" + stopper.metric])
    print(f"trained {len(model.history)} epochs; best epoch {best['epoch']} "
          f"val accuracy {best['val_accuracy']:.4f} micro-F1 {best['val_micro_f1']:.4f} -> {model_path}")


def cmd_eval(cfg: RunConfig) -> None:
    vocab = _load_vocab(cfg)
    model = _load_model(cfg, vocab)
    data = _encode(_encoder(cfg, vocab), _load_split(cfg, "eval"))
    result = erc.evaluate_dialogues(model, data)
    labels = cfg.labels()
    report = metrics(result["confusion"], labels.excluded_for_averaging, labels.names)
    print(report.to_table(digits=cfg.digits()))
    print(f"accuracy {100 * result['accuracy']:.{cfg.digits()}f}")
    _write_text(cfg.out_dir / "report.csv", report.to_csv())


def cmd_predict(cfg: RunConfig) -> None:
    vocab = _load_vocab(cfg)
    model = _load_model(cfg, vocab)
    enc = _encoder(cfg, vocab)
    labels = model.labels
    text_path = cfg.input_path("predict_text")
    lines = [ln for ln in text_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    conversations = [corpus.split_utterances(ln) for ln in lines]
    for i, conv in enumerate(conversations, start=1):
        if not conv:
            raise InputError(f"{text_path}: line {i} holds no utterance")
    results = erc.predict_many(model, [enc.encode_texts(c) for c in conversations])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("dialogue", "utterance", "text", *(f"p_{n}" for n in labels.names), "label"))
    for d, (conv, (probs, path)) in enumerate(zip(conversations, results)):
        for u, text in enumerate(conv):
            w.writerow([d, u, text, *(repr(float(p)) for p in probs[u]), labels.name_of(path[u])])
    _write_text(cfg.out_dir / "predictions.csv", buf.getvalue())
    print(f"{sum(len(c) for c in conversations)} utterances -> {cfg.out_dir / 'predictions.csv'}")


def _evaluator(cfg: RunConfig, sec: dict):
    kind = sec.pop("evaluator", "surrogate")
    if kind == "surrogate":
        return ga.SurrogateEvaluator()
    if kind != "training":
        raise InputError(f"unknown ga.evaluator {kind!r}; use 'surrogate' or 'training'")
    vocab = _load_vocab(cfg)
    enc = _encoder(cfg, vocab)
    tr = cfg.section("train")
    return ga.TrainingEvaluator(
        _encode(enc, _load_split(cfg, "train")), _encode(enc, _load_split(cfg, "val")),
        _model_config(cfg, vocab), labels=cfg.labels(), metric=sec.pop("metric", "accuracy"),
        patience=int(tr.get("patience", 3)),
    )


def cmd_tune(cfg: RunConfig, parallel: int = 0) -> None:
    seed = cfg.require_seed()
    sec = cfg.section("ga")
    evaluator = _evaluator(cfg, sec)
    specs_path = sec.pop("gene_specs", None)
    specs = ga.load_gene_specs(cfg._resolve(specs_path) if specs_path else None)
    result = ga.run_ga(ga.GaConfig(seed=seed, **sec), specs, evaluator, parallel=parallel)
    _write_text(cfg.out_dir / "ga_history.csv", ga.history_csv(result.history))
    _write_text(cfg.out_dir / "evaluations.csv", ga.records_csv(result.records))
    best = result.best
    model_cfg = evaluator.model_config(ga.to_hyper(best.chromosome)).to_dict()
    out = {
        "model": {k: v for k, v in model_cfg.items()
                  if k not in ("vocab_size", "max_seq_len", "max_char_len", "label_count")},
        "fitness": best.fitness,
        "accuracy": best.accuracy,
        "total_params": best.total_params,
    }
    _write_text(cfg.out_dir / "best_config.json", json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(f"{len(result.history)} generations, {result.evaluations} evaluations; best fitness "
          f"{best.fitness:.6g} (accuracy {best.accuracy:.4f}, {best.total_params} params)")


def cmd_mood(cfg: RunConfig) -> None:
    vocab = _load_vocab(cfg)
    model = _load_model(cfg, vocab)
    enc = _encoder(cfg, vocab)
    labels = model.labels
    sec = cfg.section("mood")
    window = int(sec.get("window_minutes", 60))
    km_path = cfg.path("kmeans")
    if km_path.exists():
        km = mood.KMeansModel.load(km_path)
    else:
        fit_path = cfg.path("fit_chat", required=False)
        if fit_path is None:
            raise InputError(f"k-means file {km_path} does not exist and no paths.fit_chat to fit one from")
        if not fit_path.exists():
            raise InputError(f"paths.fit_chat: {fit_path} does not exist")
        seed = cfg.require_seed()
        pol_path = sec.get("polarity")
        polarity = mood.polarity_by_id(mood.load_polarity(cfg._resolve(pol_path) if pol_path else None), labels)
        fit_groups = corpus.group_by_window(corpus.load_chat_csv(fit_path, labels), window)
        if not fit_groups:
            raise InputError(f"{fit_path}: no messages to fit k-means on")
        km = mood.fit_mood_model(fit_groups, model, enc, polarity, k=int(sec.get("k", 2)), seed=seed)
        km_path = cfg.out_dir / DEFAULT_ARTIFACTS["kmeans"]
        km_path.parent.mkdir(parents=True, exist_ok=True)
        km.save(km_path)
        print(f"fitted k-means on {len(fit_groups)} groups -> {km_path}")

    groups = corpus.group_by_window(corpus.load_chat_csv(cfg.input_path("chat"), labels), window)
    aggregates = mood.group_aggregates(groups, model, enc) if groups else np.zeros((0, len(labels)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("group_id", "window_start", "messages", *(f"agg_{n}" for n in labels.names), "mood"))
    counts = Counter()
    for g, agg in zip(groups, aggregates):
        m = km.mood_of(agg)
        counts[m.value] += 1
        w.writerow([g.group_id, g.window_start, len(g.messages), *(repr(float(x)) for x in agg), m.value])
    _write_text(cfg.out_dir / "mood.csv", buf.getvalue())
    print(f"{len(groups)} groups: {dict(sorted(counts.items()))} -> {cfg.out_dir / 'mood.csv'}")


HELP = {
    "preprocess": "build the vocabulary and encode the corpus splits",
    "train": "train the emotion model",
    "eval": "score the emotion model on the eval split",
    "predict": "label every utterance of a DailyDialog-format text file",
    "tune": "search hyperparameters with the genetic algorithm",
    "mood": "predict the mood of each time window of a chat log",
}

COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "tune": cmd_tune,
    "mood": cmd_mood,
}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leapmood", description="Emotion and mood recognition from chat text.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--seed", type=_u64, help="overrides the config seed")
        p.add_argument("--out", help="output directory (overrides paths.out_dir)")
        p.add_argument("--parallel", type=int, default=0, help="worker processes for GA fitness evaluation")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig.load(args.config, args.out, args.seed)
        if args.command == "tune":
            cmd_tune(cfg, parallel=args.parallel)
        else:
            COMMANDS[args.command](cfg)
    except NumericError as exc:
        print(f"leapmood {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EvaluatorError as exc:
        print(f"leapmood {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.__cause__, NumericError) else EXIT_INPUT
    except (InputError, OSError, KeyError, TypeError) as exc:
        print(f"leapmood {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
