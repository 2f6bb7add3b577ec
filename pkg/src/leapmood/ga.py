"""Genetic-algorithm hyperparameter search with a size-aware fitness.

A chromosome is a tuple of the ten :class:`~leapmood.erc.HyperParams` genes,
in :data:`GENE_ORDER`. Its fitness is validation accuracy divided by the
model's analytic parameter count, so between two equally accurate settings
the smaller model wins.

Each generation: evaluate, keep the elite, breed children by roulette-wheel
selection and one-point crossover, mutate every non-elite member, repeat.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import erc
from .errors import EvaluatorError, InputError

logger = logging.getLogger(__name__)

GENE_ORDER = erc.HyperParams.gene_names()


@dataclass(frozen=True)
class GeneSpec:
    name: str
    kind: str  # "discrete" or "continuous"
    low: float
    high: float
    component: str = ""

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise InputError(f"gene {self.name}: unknown kind {self.kind!r}")
        if not self.low < self.high:
            raise InputError(f"gene {self.name}: empty range [{self.low}, {self.high}]")
        if self.kind == "discrete" and (int(self.low) != self.low or int(self.high) != self.high):
            raise InputError(f"gene {self.name}: discrete range must be integral")

    def sample(self, rng: np.random.Generator):
        if self.kind == "discrete":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        return float(rng.uniform(self.low, self.high))

    def contains(self, value) -> bool:
        if self.kind == "discrete" and (not isinstance(value, (int, np.integer)) or isinstance(value, bool)):
            return False
        return self.low <= value <= self.high


def load_gene_specs(path=None) -> list[GeneSpec]:
    """Read a gene table (``{"genes": [{name, kind, range, component}, ...]}``)."""
    if path is None:
        text = resources.files("leapmood.data").joinpath("genes.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    return specs_from_list(raw["genes"] if isinstance(raw, dict) else raw)


def specs_from_list(items) -> list[GeneSpec]:
    specs = [GeneSpec(g["name"], g["kind"], g["range"][0], g["range"][1], g.get("component", "")) for g in items]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise InputError(f"duplicate gene names in {names}")
    if tuple(names) != GENE_ORDER:
        raise InputError(f"gene table must list exactly {GENE_ORDER} in order, got {tuple(names)}")
    return specs


def specs_to_list(specs: Sequence[GeneSpec]) -> list[dict]:
    return [{"name": s.name, "kind": s.kind, "range": [s.low, s.high], "component": s.component} for s in specs]


def validate_chromosome(chrom, specs: Sequence[GeneSpec]) -> None:
    if len(chrom) != len(specs):
        raise InputError(f"chromosome has {len(chrom)} genes, expected {len(specs)}")
    for value, spec in zip(chrom, specs):
        if not spec.contains(value):
            raise InputError(f"gene {spec.name}={value!r} violates {spec}")


def to_hyper(chrom) -> erc.HyperParams:
    return erc.HyperParams(**dict(zip(GENE_ORDER, chrom)))


def from_hyper(hp: erc.HyperParams) -> tuple:
    return tuple(getattr(hp, n) for n in GENE_ORDER)


@dataclass
class GaConfig:
    population_size: int = 7
    crossover_rate: float = 0.5
    mutation_rate: float = 0.25
    max_generations: int = 250
    seed: int = 0
    elitism_count: int = 1

    def __post_init__(self):
        if self.population_size < 2:
            raise InputError("population_size must be >= 2")
        if not (0 <= self.crossover_rate <= 1 and 0 <= self.mutation_rate <= 1):
            raise InputError("rates must lie in [0, 1]")
        if self.max_generations < 1:
            raise InputError("max_generations must be >= 1")
        if not 0 <= self.elitism_count < self.population_size:
            raise InputError("elitism_count must lie in [0, population_size)")


# --------------------------------------------------------------- evaluators

class Evaluator:
    """Maps hyperparameters to an accuracy in [0, 1].

    ``base_config`` fixes everything that is not a gene (vocabulary size,
    label count, ...) and feeds the parameter count.
    """

    base_config: erc.ModelConfig

    def model_config(self, hyper: erc.HyperParams) -> erc.ModelConfig:
        return dataclasses.replace(self.base_config, hyper=hyper)

    def accuracy(self, hyper: erc.HyperParams, seed: int) -> float:
        raise NotImplementedError


@dataclass
class SurrogateEvaluator(Evaluator):
    """Closed-form stand-in for training, with a computable optimum.

    ``accuracy = peak * shape(non-size genes) * capacity(size genes)``, where
    ``shape`` is a rational bump centred on ``targets`` and ``capacity`` is a
    product of Hill curves ``x^n / (x^n + s^n)``: tiny layers are useless,
    large ones saturate. Non-size genes do not move the parameter count, so
    the best fitness puts them on their targets; the best dimension genes are
    found by enumerating their whole integer grid.
    """

    base_config: erc.ModelConfig = field(default_factory=lambda: erc.ModelConfig(vocab_size=2000))
    peak: float = 0.9
    targets: dict = field(default_factory=lambda: {
        "batch_size": 90, "epochs": 25, "spatial_dropout": 0.2, "lstm_dropout": 0.1,
        "lstm_recurrent_dropout": 0.1, "bilstm_recurrent_dropout": 0.25,
    })
    curvature: float = 0.03
    scales: dict = field(default_factory=lambda: {
        "word_emb_dim": 40.0, "char_emb_dim": 8.0, "char_lstm_hidden": 16.0, "bilstm_hidden": 40.0,
    })
    hill_exponent: float = 3.0
    specs: list = field(default_factory=load_gene_specs)

    SIZE_GENES = ("word_emb_dim", "char_emb_dim", "char_lstm_hidden", "bilstm_hidden")

    def _shape(self, hyper) -> float:
        by_name = {s.name: s for s in self.specs}
        total = 0.0
        for name, target in self.targets.items():
            s = by_name[name]
            total += ((getattr(hyper, name) - target) / (s.high - s.low)) ** 2
        return 1.0 / (1.0 + self.curvature * total)

    def _capacity(self, dims: dict):
        out = 1.0
        n = self.hill_exponent
        for name in self.SIZE_GENES:
            x = np.asarray(dims[name], dtype=float) / self.scales[name]
            out = out * (x ** n / (x ** n + 1.0))
        return out

    def accuracy(self, hyper, seed=0) -> float:
        dims = {n: getattr(hyper, n) for n in self.SIZE_GENES}
        return float(self.peak * self._shape(hyper) * self._capacity(dims))

    def optimum(self) -> tuple[tuple, float]:
        """Best chromosome and fitness, by exhaustive search over the size genes."""
        by_name = {s.name: s for s in self.specs}
        ranges = {n: np.arange(int(by_name[n].low), int(by_name[n].high) + 1) for n in self.SIZE_GENES}
        cfg = self.base_config
        L, Vw, Vc = cfg.label_count, cfg.vocab_size, cfg.char_vocab_size
        dc, hc, hb = np.meshgrid(ranges["char_emb_dim"], ranges["char_lstm_hidden"], ranges["bilstm_hidden"],
                                 indexing="ij")
        a = hb if cfg.attention_dim is None else cfg.attention_dim
        best = (-1.0, None)
        for dw in ranges["word_emb_dim"]:
            d_in = dw + hc
            total = (Vw * dw + Vc * dc + 4 * ((dc + hc) * hc + hc) + 8 * ((d_in + hb) * hb + hb)
                     + 2 * hb * a + 2 * a + 2 * hb * L + L + L * L + 2 * L)
            cap = self._capacity({"word_emb_dim": dw, "char_emb_dim": dc, "char_lstm_hidden": hc, "bilstm_hidden": hb})
            ratio = cap / total
            i = np.unravel_index(np.argmax(ratio), ratio.shape)
            if ratio[i] > best[0]:
                best = (ratio[i], (int(dw), int(dc[i]), int(hc[i]), int(hb[i])))
        dims = dict(zip(self.SIZE_GENES, best[1]))
        genes = {}
        for s in self.specs:
            if s.name in dims:
                genes[s.name] = dims[s.name]
            else:
                t = self.targets[s.name]
                genes[s.name] = int(round(t)) if s.kind == "discrete" else float(t)
        chrom = tuple(genes[n] for n in GENE_ORDER)
        return chrom, fitness(chrom, self).fitness


@dataclass
class TrainingEvaluator(Evaluator):
    """Accuracy of a freshly trained model on a validation split."""

    train_set: list
    val_set: list
    base_config: erc.ModelConfig
    labels: object = None
    metric: str = "accuracy"  # or "micro_f1"
    patience: int = 3

    def accuracy(self, hyper, seed=0) -> float:
        labels = self.labels if self.labels is not None else erc.DAILYDIALOG_LABELS
        model = erc.train(
            self.train_set, self.val_set, self.model_config(hyper), rng=seed,
            early_stopping=erc.EarlyStopping(self.patience, self.metric), labels=labels,
        )
        return float(erc.evaluate_dialogues(model, self.val_set)[self.metric])


# ------------------------------------------------------------------ fitness

@dataclass(frozen=True)
class FitnessRecord:
    chromosome: tuple
    accuracy: float
    total_params: int
    fitness: float


class FitnessCache:
    """Memoises evaluations by chromosome value."""

    def __init__(self):
        self.records: dict[tuple, FitnessRecord] = {}
        self.calls = 0

    def __contains__(self, chrom) -> bool:
        return tuple(chrom) in self.records

    def get(self, chrom):
        return self.records.get(tuple(chrom))

    def put(self, rec: FitnessRecord) -> None:
        self.records[rec.chromosome] = rec


def make_record(chrom, accuracy: float, evaluator: Evaluator) -> FitnessRecord:
    if not 0.0 <= accuracy <= 1.0:
        raise EvaluatorError(f"accuracy {accuracy} outside [0, 1]", tuple(chrom))
    total = erc.count_params(evaluator.model_config(to_hyper(chrom)))["total"]
    return FitnessRecord(tuple(chrom), float(accuracy), int(total), float(accuracy) / total)


def fitness(chrom, evaluator: Evaluator, cache: FitnessCache | None = None, seed: int = 0) -> FitnessRecord:
    """Accuracy over total parameter count; cached by chromosome when ``cache`` is given."""
    chrom = tuple(chrom)
    if cache is not None and chrom in cache:
        return cache.get(chrom)
    try:
        acc = evaluator.accuracy(to_hyper(chrom), seed)
    except EvaluatorError:
        raise
    except Exception as exc:
        raise EvaluatorError(f"evaluation failed: {exc}", chrom) from exc
    rec = make_record(chrom, acc, evaluator)
    if cache is not None:
        cache.calls += 1
        cache.put(rec)
    return rec


def _evaluate_remote(args):
    evaluator, chrom, seed = args
    return evaluator.accuracy(to_hyper(chrom), seed)


# ---------------------------------------------------------------- operators

def init_population(specs: Sequence[GeneSpec], config: GaConfig, rng: np.random.Generator) -> list[tuple]:
    return [tuple(s.sample(rng) for s in specs) for _ in range(config.population_size)]


def roulette_areas(fitnesses) -> np.ndarray:
    f = np.asarray(fitnesses, dtype=np.float64)
    if np.any(f < 0):
        raise InputError("fitness values must be non-negative")
    total = f.sum()
    if total <= 0:
        raise InputError("all fitness values are zero; roulette selection is undefined")
    return f / total


def roulette_select(records: Sequence[FitnessRecord], rng: np.random.Generator) -> tuple:
    """Pick one chromosome with probability ``fitness_i / sum(fitness)``.

    Raises:
        InputError: if every fitness is zero. No uniform fallback is applied
            here; the caller decides.
    """
    areas = roulette_areas([r.fitness for r in records])
    edges = np.cumsum(areas)
    i = int(np.searchsorted(edges, rng.random() * edges[-1], side="right"))
    # zero-area slots have coincident edges and are never hit
    return records[min(i, len(records) - 1)].chromosome


def one_point_crossover(a, b, rng: np.random.Generator, point: int | None = None):
    n = len(a)
    k = int(rng.integers(1, n)) if point is None else point
    return tuple(a[:k]) + tuple(b[k:]), tuple(b[:k]) + tuple(a[k:])


def mutation_count(size: int, rate: float) -> int:
    # nearest integer, exact halves rounded down
    return max(0, math.ceil(size * rate - 0.5))


def mutate(chrom, specs: Sequence[GeneSpec], config: GaConfig, rng: np.random.Generator) -> tuple:
    n = mutation_count(len(specs), config.mutation_rate)
    if n == 0:
        return tuple(chrom)
    out = list(chrom)
    for pos in rng.choice(len(specs), size=n, replace=False):
        out[pos] = specs[pos].sample(rng)
    return tuple(out)


# --------------------------------------------------------------------- loop

@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_accuracy: float
    best_params: int
    chromosome: tuple


@dataclass
class GaResult:
    best: FitnessRecord
    history: list[GenerationStats]
    evaluations: int
    records: list[FitnessRecord] = field(default_factory=list)  # every distinct chromosome, in evaluation order


def _eval_seed(seed, generation, slot) -> int:
    return int(np.random.SeedSequence([seed, generation, slot]).generate_state(1)[0])


def evaluate_population(population, evaluator, cache: FitnessCache, seed: int, generation: int,
                        parallel: int = 0) -> list[FitnessRecord]:
    pending = {}
    for slot, chrom in enumerate(population):
        if chrom not in cache and chrom not in pending:
            pending[chrom] = _eval_seed(seed, generation, slot)
    if pending:
        jobs = [(evaluator, c, s) for c, s in pending.items()]
        if parallel and parallel > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                futures = [pool.submit(_evaluate_remote, j) for j in jobs]
                results = []
                for (_, c, _), fut in zip(jobs, futures):
                    try:
                        results.append(fut.result())
                    except Exception as exc:
                        raise EvaluatorError(f"evaluation failed: {exc}", c) from exc
        else:
            results = []
            for _, c, s in jobs:
                try:
                    results.append(evaluator.accuracy(to_hyper(c), s))
                except Exception as exc:
                    raise EvaluatorError(f"evaluation failed: {exc}", c) from exc
        for (_, c, _), acc in zip(jobs, results):
            cache.calls += 1
            cache.put(make_record(c, acc, evaluator))
    return [cache.get(c) for c in population]


def _select(records, rng):
    try:
        return roulette_select(records, rng)
    except InputError:
        logger.warning("all fitness values zero; selecting uniformly this round")
        return records[int(rng.integers(len(records)))].chromosome


def run_ga(config: GaConfig, specs: Sequence[GeneSpec], evaluator: Evaluator, parallel: int = 0,
           initial: Sequence[tuple] | None = None) -> GaResult:
    """Generational GA with elitism; see the module docstring for the loop."""
    rng = np.random.default_rng(config.seed)
    cache = FitnessCache()
    population = list(initial) if initial is not None else init_population(specs, config, rng)
    for c in population:
        validate_chromosome(c, specs)
    history: list[GenerationStats] = []
    best: FitnessRecord | None = None
    n_cross = math.floor(config.population_size * config.crossover_rate)
    for gen in range(config.max_generations):
        try:
            records = evaluate_population(population, evaluator, cache, config.seed, gen, parallel)
        except EvaluatorError as exc:
            exc.history = history
            raise
        ranked = sorted(records, key=lambda r: -r.fitness)
        if best is None or ranked[0].fitness > best.fitness:
            best = ranked[0]
        history.append(GenerationStats(
            gen, ranked[0].fitness, float(np.mean([r.fitness for r in records])),
            ranked[0].accuracy, ranked[0].total_params, ranked[0].chromosome,
        ))
        logger.info("generation %d best fitness %.4g (acc %.4f, %d params)", gen, ranked[0].fitness,
                    ranked[0].accuracy, ranked[0].total_params)
        if gen == config.max_generations - 1:
            break

        elites = [r.chromosome for r in ranked[:config.elitism_count]]
        free = config.population_size - len(elites)
        children: list[tuple] = []
        for _ in range(n_cross):
            children.extend(one_point_crossover(_select(records, rng), _select(records, rng), rng))
        children = children[:free]
        while len(children) < free:
            children.append(_select(records, rng))
        population = elites + [mutate(c, specs, config, rng) for c in children]
    return GaResult(best, history, cache.calls, list(cache.records.values()))


HISTORY_HEADER = ("generation", "best_fitness", "mean_fitness", "best_accuracy", "best_params", "chromosome_json")


def history_csv(history: Sequence[GenerationStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for h in history:
        w.writerow([h.generation, repr(h.best_fitness), repr(h.mean_fitness), repr(h.best_accuracy),
                    h.best_params, json.dumps(dict(zip(GENE_ORDER, h.chromosome)))])
    return buf.getvalue()


def records_csv(records: Sequence[FitnessRecord]) -> str:
    """One row per evaluated chromosome: gene columns, accuracy, params, fitness."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((*GENE_ORDER, "accuracy", "total_params", "fitness"))
    for r in records:
        w.writerow([*r.chromosome, repr(r.accuracy), r.total_params, repr(r.fitness)])
    return buf.getvalue()
