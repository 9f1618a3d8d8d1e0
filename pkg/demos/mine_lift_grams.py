"""Skip-gram lift mining on a toy pool: plant a phrase family, rank a top
set that concentrates it, and watch the family's word pair surface."""
import numpy as np

from rareloop.corpus import Corpus
from rareloop.skipgrams import build_gram_index, compute_lift, select_top_lift

rng = np.random.default_rng(0)
filler = "river stone market morning evening coffee paper train garden window".split()

pool = Corpus()
planted = []
for i in range(5000):
    body = list(rng.choice(filler, size=6))
    if rng.random() < 0.01:
        # the family's characteristic surface: "rent overdue", in order
        text = " ".join(body[:2] + ["rent", "overdue"] + body[2:])
        planted.append(f"d{i:04d}")
    else:
        text = " ".join(body)
    pool.add(f"d{i:04d}", text)

print(f"pool of {len(pool)} docs, {len(planted)} planted")

# document-frequency floor: every family doc contains "rent overdue"
# (~1% of the pool) but a given filler word precedes "overdue" in only a
# quarter of them, so a floor of 0.5% keeps the family surface and drops
# the stray (filler, family-word) co-occurrences that would tie its lift
index = build_gram_index(pool, 2, min_freq=5e-3)
print(f"indexed {len(index.counts)} distinct pairs")

# pretend a scorer put every planted doc in the top 200: half the top set
# is family, one in a hundred of the pool is, so lift should be ~50x
top_ids = planted + [f"d{i:04d}" for i in range(150)]
top_ids = list(dict.fromkeys(top_ids))[:200]

entries = compute_lift(top_ids, pool, index)
best = select_top_lift(entries, k=3)
for gram in best.grams:
    entry = next(e for e in entries if e.gram == gram)
    print(f"{'+'.join(gram):30s} lift={entry.lift:6.1f} "
          f"top_freq={entry.top_freq:.3f} pool_freq={entry.pool_freq:.5f}")

# the planted pair dominates; the filler pairs sit near lift 1
assert best.grams[0] == ("rent", "overdue")
