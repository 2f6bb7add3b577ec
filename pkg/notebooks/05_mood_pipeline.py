"""
From messages to group mood
============================

Messages are grouped into hourly windows, each group's emotion
distributions are averaged, and a two-cluster k-means model splits the
averages into GOOD and BAD moods. The same run is available from the
command line; this script drives it through ``leapmood.cli.main``.
"""

# %%
import csv
import json
import tempfile
from pathlib import Path

from leapmood import synthetic
from leapmood.cli import main

work = Path(tempfile.mkdtemp())
cfg = synthetic.write_workspace(work, seed=3)
print(cfg.read_text())

# %%
for cmd in ("preprocess", "train", "eval", "mood"):
    assert main([cmd, "--config", str(cfg)]) == 0

# %%
with open(work / "out" / "mood.csv", newline="") as fh:
    got = [r["mood"] for r in csv.DictReader(fh)]
want = json.loads((work / "chat_moods.json").read_text())
print("mood accuracy", sum(a == b for a, b in zip(got, want)) / len(want))
