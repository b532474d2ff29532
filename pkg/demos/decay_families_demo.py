"""
Sample weights from time gaps, and the force that tunes them
============================================================

A segment recorded far from its lab draw carries a stale label. The
loss multiplies each segment's BCE by w = g(alpha_hat * delta_t), where
g is one of four decay families and alpha_hat = softplus(alpha) is a
learnable per-biomarker rate. This demo prints the weight curves and
then shows the gradient pressure that moves the rate during training:
samples the network already classifies well push the rate down (keeping
their weights high), hopeless samples push it up (fading themselves
out).
"""

import numpy as np

from ppgdecay.decay import DecayFamily, DecayParam, inverse_softplus, weight
from ppgdecay.objective import weighted_loss

rate = 0.15  # 1/day
param = {fam: DecayParam(raw=inverse_softplus(rate), family=fam)
         for fam in DecayFamily}

print(f"weight by time gap at alpha_hat = {rate}/day")
gaps = np.array([0.0, 2.0, 5.0, 10.0, 20.0, 30.0])
header = "gap_days " + " ".join(f"{fam.value:>12}" for fam in DecayFamily)
print(header)
for gap in gaps:
    cells = " ".join(f"{weight(param[fam], gap):12.4f}" for fam in DecayFamily)
    print(f"{gap:8.1f} {cells}")

# All four families agree at a gap of zero (weight 1) and are monotone
# non-increasing; they differ in how hard they cut off. Linear and
# cosine reach exactly zero at gap = 1/alpha_hat; exponential and
# inverse only approach it.

print()
print("gradient pressure on the raw rate (linear family)")
lin = param[DecayFamily.LINEAR]

# Three segments with identical 5-day gaps but very different fits:
# confident correct, uncertain, and confidently wrong.
logits = np.array([3.0, 0.1, -3.0])
labels = np.array([1.0, 1.0, 1.0])
gaps5 = np.full(3, 5.0)
names = ("confident", "uncertain", "wrong")
for name, logit in zip(names, logits):
    bd = weighted_loss(np.array([logit]), np.array([1.0]), np.array([5.0]), lin)
    direction = "lower the rate (keep weight)" if bd.d_total_d_raw_alpha > 0 \
        else "raise the rate (fade out)"
    print(f"  {name:<10} bce={bd.weighted_bce / bd.mean_weight:6.3f} "
          f"d_raw={bd.d_total_d_raw_alpha:+.4f} -> descent will {direction}")

bd = weighted_loss(logits, labels, gaps5, lin)
print(f"  batch of all three: d_raw={bd.d_total_d_raw_alpha:+.4f}")

# The -0.5 * mean_weight bonus balances the two pressures: without it,
# zero weights everywhere would trivially minimize the weighted BCE. A
# sample whose BCE sits exactly at 0.5 exerts no pull at all.
balanced_logit = np.log(np.exp(0.5) - 1.0)  # bce(sigmoid(z), 0) == 0.5
bd = weighted_loss(np.array([-balanced_logit]), np.array([1.0]),
                   np.array([5.0]), lin)
print(f"  bce pinned at lam=0.5: d_raw={bd.d_total_d_raw_alpha:+.2e}")
