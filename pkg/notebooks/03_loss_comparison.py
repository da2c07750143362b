# coding: utf-8

# # Comparing losses on a small benchmark
#
# Every loss trains the same two-layer scorer. Only the objective changes.
# This runs a reduced network for speed, so the numbers are indicative only.

# In[1]:

from overlap_ad.bench import ExperimentConfig, format_report, report, run_suite

network = {"hidden_dim": 20, "epochs": 50, "batch_size": 256}


# Three seeds per loss on the clustered and local sets.

# In[2]:

records = []
for kind in ("clustered", "local"):
    for loss in ("overlap", "minus", "hinge", "deviation", "ordinal"):
        cfg = ExperimentConfig(loss=loss, dataset={"synth": {"type": kind}}, network=network,
                               repeats=3, gamma_l=0.2, name=loss)
        records += run_suite(cfg)


# Mean AUC-PR per cell, plus a one-sided signed-rank test of overlap against
# each other loss across datasets.

# In[3]:

print(format_report(report(records)))


# Clustered anomalies are easy for everything. Local anomalies overlap the
# normals in feature space, and with only a handful of revealed labels the
# gap between losses is small and noisy.
