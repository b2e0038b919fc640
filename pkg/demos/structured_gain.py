# %% [markdown]
# # Structured inference against independent classifiers
#
# Four variants on the desk-scale benchmark: a (3, 8, 20) tree with
# 40 samples per leaf class, five seeded 60/40 splits.

# %%
from sinn.experiments import benchmark_config, benchmark_dataset, repeated_splits

ds = benchmark_dataset()
names = [layer.name for layer in ds.graph.layers]
print(len(ds), "samples", ds.graph.sizes)

# %%
runs = {v: repeated_splits(ds, v, benchmark_config()) for v in ("logistic", "topdown", "binn", "sinn")}

# %% [markdown]
# Per-layer mAP over labels, mean ± std in percent.  The coarse layers are
# easy for every model; the leaf layer is where label relations pay off.

# %%
print(f"{'variant':<10}" + "".join(f"{n:>16}" for n in names) + f"{'mc acc (leaf)':>16}")
for v, r in runs.items():
    cells = [r.summary("map_l", n) for n in names]
    mc = r.summary(f"mc_acc.{names[-1]}", names[-1])
    print(f"{v:<10}" + "".join(f"{100 * m:10.2f} ± {100 * s:4.2f}" for m, s in cells)
          + f"{100 * mc[0]:10.2f} ± {100 * mc[1]:4.2f}")
