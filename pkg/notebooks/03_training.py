"""
Training the conversation emotion model
========================================

A small BiLSTM-attention-CRF model on synthetic DailyDialog-style data.
The real corpus is not bundled; the synthetic generator plants emotion
words so a few epochs are enough to learn something.
"""

# %%
from leapmood import erc, synthetic
from leapmood import preprocess as pp
from leapmood.evaluation import metrics

acronyms = pp.load_acronyms()
dialogues = synthetic.make_dialogues(180, seed=1)
vocab = pp.build_vocab([pp.preprocess_text(u, acronyms) for d in dialogues[:120] for u in d.utterances], 2000)
enc = pp.TextEncoder(vocab, acronyms, max_seq_len=12)
data = [enc.encode_texts(d.utterances, d.labels) for d in dialogues]
train, val, test = data[:120], data[120:150], data[150:]

# %%
hp = erc.HyperParams(batch_size=16, epochs=20, word_emb_dim=16, char_emb_dim=8, char_lstm_hidden=8,
                     bilstm_hidden=16)
cfg = erc.ModelConfig(hyper=hp, vocab_size=len(vocab), max_seq_len=12, learning_rate=0.01)
print(erc.count_params(cfg))
model = erc.train(train, val, cfg, rng=0, early_stopping=erc.EarlyStopping(3))
for h in model.history:
    print(h)

# %%
result = erc.evaluate_dialogues(model, test)
print(metrics(result["confusion"], model.labels.excluded_for_averaging, model.labels.names).to_table())

# %%
# the default sizes give about 1.75M parameters at a 30k vocabulary
print(erc.count_params(erc.ModelConfig(vocab_size=30000))["total"])
