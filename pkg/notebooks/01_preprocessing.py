"""
Cleaning, phonetic matching and encoding
=========================================

Chat text is noisy: stretched words, emoji, shorthand. This walks one
message through the text pipeline and shows how Soundex codes recover
words that are not in the vocabulary.
"""

# %%
from leapmood import preprocess as pp
from leapmood import synthetic

acronyms = pp.load_acronyms()
raw = "OMG im sooooo happyyyy 2day :) lol"
print(pp.clean_text(raw))
print(pp.preprocess_text(raw, acronyms))

# %%
# stretched spellings collapse onto the same code as the base word
for a, b in [("happyyyyyyy", "happy"), ("elefant", "elephant"), ("awesoooomeeee", "awesome")]:
    print(f"{a:>15} {pp.soundex(a)}   {b:<10} {pp.soundex(b)}")

# %%
# build a vocabulary from a small synthetic corpus and encode unseen spellings
dialogues = synthetic.make_dialogues(50, seed=0)
vocab = pp.build_vocab([pp.preprocess_text(u, acronyms) for d in dialogues for u in d.utterances], 500)
enc = pp.TextEncoder(vocab, acronyms, max_seq_len=12)
e = enc.encode_texts(["i am sooo happppy", "this is aweeesome"])
for row, n in zip(e.word_ids, e.lengths):
    print([vocab.id_to_word[i] for i in row[:n]])
