import numpy as np
from scipy.stats import hypergeom

from confexec import analysis, scenario, sim

# ### How likely is a bad storage receipt?
#
# Results are published only after t of s randomly chosen storage nodes sign
# for the encrypted blobs. With m adversarial nodes out of n, a receipt can be
# produced without any honest holder only when the subnet draws at least t of
# them. That is a hypergeometric upper tail, computed here exactly.

n, m, s = 10_000, 3_333, 38
rows = analysis.rsts_sweep(analysis.threshold_grid(n, m, s))
print(f"n={n}, m={m}, s={s}")
for r in rows[25:]:
    mark = "  <- 90% threshold" if r.headline else ""
    print(f"  t={r.t:>2}  log10(eps) = {r.log10:9.3f}{mark}")
print("monotone in t:", analysis.monotone_in_t(rows))

# The float route through scipy agrees wherever it does not underflow.

exact = np.array([r.log10 for r in rows[25:]])
approx = np.log10(hypergeom(n, m, s).sf(np.arange(25, s)))
print("max |log10 difference| vs scipy:", float(np.max(np.abs(exact - approx))))

# ### A small case by hand
#
# Ten nodes, four adversarial, subnets of five, threshold four:
# C(4,4) C(6,1) / C(10,5) = 6/252 = 1/42.

small = analysis.rsts_epsilon(10, 4, 5, 4)
est = analysis.rsts_montecarlo(10, 4, 5, 4, trials=100_000)
print(f"exact {small.exact} = {small.approx:.5f}, Monte-Carlo {est.p:.5f} +- {est.se:.5f}")

# ### The same number from a running network
#
# In rsts_coalition four of ten hosts withhold data but acknowledge at once,
# and honest acknowledgements arrive after the timeout. A receipt then exists
# only when the subnet happens to hold t adversarial members.

rep = sim.run(scenario.load_bundled("rsts_coalition"))
d = rep["dissemination"]
print(f"{d['granted']} of {d['blobs']} blobs granted ({d['granted'] / d['blobs']:.4f}), "
      f"all without an honest confirmer: {d['granted'] == d['granted_without_honest']}; 1/42 = {1 / 42:.4f}")
