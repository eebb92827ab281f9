"""Tour of the training objectives and their analytic gradients.

Run with: python3 demos/02_losses_and_gradients.py
"""

import numpy as np

from xmodal import losses as L
from xmodal.trainer import grad_check

# The bidirectional contrastive loss on a diagonal similarity matrix at
# temperature 1: each direction is -log(e / (e + 1)) = 0.31326...
eye = L.SimilarityMatrix(np.eye(2), tau=1.0)
print("InfoNCE (one direction):", L.info_nce_directional(eye)[0])
print("pair loss (both directions):", L.cts_pair(eye)[0])
print("two-level total:", L.cts_total(eye, L.SimilarityMatrix(np.eye(2), 1.0))[0])

# Supervised variant: with both batch rows sharing a speaker, the positive
# set of each anchor covers the whole row.
print("supervised, same-speaker pair:", L.sup_con_directional(eye, ["a", "a"])[0])

# Every analytic gradient in the engine is verified against a central
# finite-difference oracle through the full model.
print("\ngradient check (tolerance 1e-4):")
for mode, r in grad_check(seed=0).items():
    print(f"  {mode:<14} max rel err {r['max_rel_err']:.2e}  {'ok' if r['pass'] else 'BAD'}")
