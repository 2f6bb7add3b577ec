"""
The CRF layer and gradient checking
====================================

The emotion model ends in a linear-chain CRF over the utterances of a
conversation. Here we compare its partition function and Viterbi decode to
brute force on a tiny instance, then check a layer gradient numerically.
"""

# %%
import itertools

import numpy as np

from leapmood import nn

rng = np.random.default_rng(0)
S, L = 3, 3
emissions = rng.normal(size=(S, L))
crf = {"transitions": rng.normal(size=(L, L)), "start": rng.normal(size=L), "end": rng.normal(size=L)}

paths = list(itertools.product(range(L), repeat=S))
scores = np.array([nn.crf_score(emissions, y, crf) for y in paths])
print("log Z, forward:", nn.crf_log_partition(emissions, crf))
print("log Z, brute:  ", np.log(np.exp(scores).sum()))
print("viterbi:", nn.crf_viterbi(emissions, crf)[0], " brute:", paths[int(scores.argmax())])

# %%
# central differences against the analytic gradient of the CRF loss
gold = [0, 2, 1]
_, grads = nn.crf_nll(emissions, gold, crf)
eps = 1e-5
numeric = np.zeros_like(emissions)
for idx in np.ndindex(emissions.shape):
    up, down = emissions.copy(), emissions.copy()
    up[idx] += eps
    down[idx] -= eps
    numeric[idx] = (nn.crf_nll(up, gold, crf)[0] - nn.crf_nll(down, gold, crf)[0]) / (2 * eps)
print("max abs difference:", np.abs(numeric - grads["emissions"]).max())
