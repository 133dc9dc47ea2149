import numpy as np

from confexec import analysis, scenario, sim

# ### Liveness with one honest node
#
# Each round picks c of n nodes by a coprime stride from a seed derived from
# the block hash. One honest node gets a turn within t rounds with probability
# 1 - (1 - c/n)^t.

n = 20
print("delta(n=20, c, t) for t = 1..8")
for c in (1, 2, 4, 8):
    row = [float(analysis.liveness_delta(n, c, t)) for t in range(1, 9)]
    print(f"  c={c}: " + " ".join(f"{x:.3f}" for x in row))
est = analysis.liveness_montecarlo(analysis.LivenessQuery(20, 4, 5), trials=10_000)
print(f"c=4, t=5: exact {float(analysis.liveness_delta(20, 4, 5)):.5f}, simulated {est.p:.4f} +- {est.se:.4f}")

# ### A round with no response
#
# In dropout_recovery the whole committee of block 6 crashes. Nothing is
# published for that round, and the next committee executes both pending
# blocks from the checkpoint in one go.

rep = sim.run(scenario.load_bundled("dropout_recovery"))
print("availability gaps:", rep["availability_gaps"])
for p in rep["publishes"]:
    if p["accepted"] and 4 <= p["end"] <= 8:
        print(f"  block {p['block']}: range ({p['start']}, {p['end']}] by node {p['node']}")
print("request latencies:", sorted({q["latency"] for q in rep["requests"]}))

# ### Restarting every node
#
# All enclaves are killed after block 20. Fresh ones rebuild from the chain
# and the blob store, and produce the same hashes as a run that never stopped.

sc = scenario.load_bundled("checkpoint")
restarted = sim.run(sc)
reference = sim.run(sc.replace(restart_all_after=None))
print("final state digests equal:",
      restarted["audit"]["final_state_digest"] == reference["audit"]["final_state_digest"])

# ### On-chain cost does not grow with work
#
# compute_cost runs a loop of k iterations inside the enclave. Only the step
# count grows; the transaction and publish costs stay fixed.

rep = sim.run(scenario.load_bundled("compute_cost"))
runs = [q for q in rep["requests"] if q["function"] == "run"]
steps = np.array([q["steps"] for q in runs])
print("steps:", steps.tolist())
print("tx_cost:", sorted({q["tx_cost"] for q in runs}), "publish_cost:", sorted({q["publish_cost"] for q in runs}))
