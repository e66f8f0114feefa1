"""The three ranking losses over one positive and many negative scores."""

import numpy as np

from sessrec import loss as L
from sessrec.tensor import Tensor

rng = np.random.default_rng(0)
pos = Tensor(rng.normal(size=(4,)))
negs = Tensor(rng.normal(size=(4, 16)))

print("pointwise bce:    ", L.bce(pos, negs).item())
print("pairwise bpr-max: ", L.bpr_max(pos, negs, lambda_reg=1.0).item())
print("listwise ssm:     ", L.ssm(pos, negs).item())

# SSM is shift invariant: rescoring everything by a constant changes nothing.
shifted = L.ssm(Tensor(pos.data + 100.0), Tensor(negs.data + 100.0)).item()
print("ssm shift invariance:", abs(shifted - L.ssm(pos, negs).item()) < 1e-12)

# A better-separated positive always lowers every loss.
better = Tensor(pos.data + 1.0)
for name, fn in [("bce", L.bce), ("bpr-max", lambda p, n: L.bpr_max(p, n, 1.0)),
                 ("ssm", L.ssm)]:
    print(f"{name}: raising the positive lowers the loss:",
          fn(better, negs).item() < fn(pos, negs).item())

# Composition with top-k filtering: the loss over the selected scores equals
# the loss computed on only those negatives.
from sessrec.sampler import topk_filter

all_scores = Tensor(rng.normal(size=(4, 16)), requires_grad=True)
selection = topk_filter(all_scores, 5)
via_filter = L.ssm(pos, selection.scores).item()
direct = L.ssm(pos, Tensor(np.take_along_axis(all_scores.data, selection.indices, -1))).item()
print("top-k composition exact:", via_filter == direct)

# Masked positions contribute nothing, even with garbage scores.
masked = L.ssm(
    Tensor(np.array([0.3, 1e300])),
    Tensor(np.array([[0.1, 0.2], [1e300, 1e300]])),
    mask=np.array([True, False]),
)
print("masked garbage is harmless:", np.isfinite(masked.item()))
