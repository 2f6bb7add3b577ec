"""
Hyperparameter search with a genetic algorithm
===============================================

Fitness is accuracy divided by parameter count, so the search trades a
little accuracy for a much smaller model. Training a model per fitness
call is slow; the surrogate evaluator has a known optimum and runs in
milliseconds.
"""

# %%
from leapmood import ga

specs = ga.load_gene_specs()
for s in specs:
    print(s)

# %%
ev = ga.SurrogateEvaluator()
best, f_best = ev.optimum()
print("known optimum", best, f_best)

res = ga.run_ga(ga.GaConfig(max_generations=50, seed=0), specs, ev)
for h in res.history[::10]:
    print(h.generation, h.best_fitness)
print("found", res.best.chromosome, res.best.fitness / f_best)

# %%
# fitness-proportional selection areas
print(ga.roulette_areas([r.fitness for r in res.records[:7]]))
