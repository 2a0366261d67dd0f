"""
Cora from the raw tables
========================

Converts the Cora node and edge tables in ``data/raw/cora`` into the neutral
on-disk format, then trains two-layer GCN and Cross-GCN with fixed order
weights on a few random splits of 20 labels per class. The full protocol
uses 20 splits; after ``crossgcn prepare cora --in data/raw/cora --out data/cora``,
``crossgcn reproduce 5 --datasets cora`` runs it.

Run with ``python3 demos/cora.py`` (under a minute).
"""

import tempfile
from pathlib import Path

from crossgcn.graphdata import load_dataset, save_dataset
from crossgcn.sources import read_source
from crossgcn.training import ExperimentConfig, run_experiment

raw = Path(__file__).resolve().parent.parent / "data" / "raw" / "cora"
ds = read_source(raw, "cora")
print(f"{ds.name}: {ds.n_nodes} nodes, {ds.n_edges} edges, {ds.n_features} features, {ds.n_classes} classes")
print(f"label rate {ds.label_rate:.3f}, val {ds.splits.val.size}, test {ds.splits.test.size}")

# Saving and reloading gives the same dataset the CLI would train on.
with tempfile.TemporaryDirectory() as tmp:
    ds = load_dataset(save_dataset(ds, Path(tmp) / "cora"))

# %%
# Same hyperparameters for both models.

for variant in ("gcn", "cross-fix"):
    s = run_experiment(ds, ExperimentConfig(variant=variant), n_splits=5)
    print(f"{variant:>9}: {100 * s.mean:.1f} +- {100 * s.std:.1f} over {len(s.runs)} splits")
    best = [r.best_val_epoch for r in s.runs]
    print(f"           best validation epochs {best}")
