# coding: utf-8

# # Driving the command line tool
#
# The same steps as the comparison notebook, through `overlap-ad`. Each call
# goes through `main`, which is what the console script runs.

# In[1]:

import json
import tempfile
from pathlib import Path

from overlap_ad.cli import main

work = Path(tempfile.mkdtemp())


# Make a dataset on disk. The last CSV column is the 0/1 label.

# In[2]:

main(["synth", "--type", "global", "--out", str(work / "global.csv"), "--seed", "2"])


# A config can hold several runs. Results are appended as JSON lines.

# In[3]:

small = {"hidden_dim": 8, "epochs": 20, "batch_size": 128}
runs = {"runs": [
    {"loss": "overlap", "dataset": {"path": str(work / "global.csv")}, "network": small, "repeats": 2},
    {"loss": "hinge", "dataset": {"path": str(work / "global.csv")}, "network": small, "repeats": 2},
]}
(work / "cfg.json").write_text(json.dumps(runs))
main(["run", "--config", str(work / "cfg.json"), "--out", str(work / "res.jsonl")])
print((work / "res.jsonl").read_text().splitlines()[0])


# Summarize.

# In[4]:

main(["report", "--in", str(work / "res.jsonl"), "--metric", "auc_roc"])


# Dump the learned hidden representation of the test split for plotting.

# In[5]:

one = dict(runs["runs"][0], repeats=1)
(work / "one.json").write_text(json.dumps(one))
main(["dump-embeddings", "--config", str(work / "one.json"), "--out", str(work / "emb.csv")])
print((work / "emb.csv").read_text().splitlines()[0])
