"""
Does shuffling hide a soft-biometric attribute?
===============================================

A logistic probe learns a binary attribute from unprotected embeddings.
Applied to embeddings shuffled with a fresh key per sample, its accuracy
falls toward chance; fewer, larger blocks leak more.
"""
from pemiu_toolkit import REFERENCE_SPEC, generate, partition
from pemiu_toolkit.attack import record_mappings
from pemiu_toolkit.pemiu import protect_rows
from pemiu_toolkit.probe import cross_validate

ds = generate(REFERENCE_SPEC)

evals = {}
for K in (16, 32, 64, 128):
    part = partition(ds.S, K)
    evals[f"K={K}"] = protect_rows(ds.embeddings, part, record_mappings(ds, part, 7))

_, reports = cross_validate(ds.embeddings, ds.attributes, evals, folds=5, seed=7)
for name, rep in reports.items():
    print(f"{name:12s} accuracy {rep.summary()}")
