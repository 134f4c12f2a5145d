"""
A sensor network, one compression step, and the lifting map.

Four nodes observe five channels each.  Node 2 updates: the other nodes
send one compressed channel each, node 2 stacks them under its own five
channels, and any local filter maps back to a network-wide filter through
the lifting matrix C.
"""

import numpy as np

from dasf import (MixtureSource, NetworkModel, assemble_local_problem, build_lifting_map,
                  make_problem, warm_start)
from dasf.core import node_payload

rng = np.random.default_rng(0)
net = NetworkModel.uniform(K=4, M_k=5, Q=1)
source = MixtureSource.random(net, rng, mode="sampled")
problem = make_problem("maxsnr", net)

X = rng.standard_normal((net.M, net.Q))
q = 2
batches = source.sample(500)
payloads = {k: node_payload(problem, net, X, k, batches) for k in (1, 3, 4)}
local = assemble_local_problem(problem, net, X, q, payloads, batches=batches)

print(f"network channels {net.M}, local channels {local.dim}")
for k, p in payloads.items():
    print(f"node {k} sends {p.signals['y'].shape[0]} x {p.signals['y'].shape[1]} compressed samples")

C = build_lifting_map(net, X, q).C
x0 = warm_start(net, X, q)
print("lift of the warm start equals X:", np.array_equal(C @ x0, X))

# the compressed covariance is the congruence of the full one
full = batches["y"].samples
R = full.T @ full / full.shape[0]
print("max |R_local - C^T R C| =", np.abs(local.stats["y"] - C.T @ R @ C).max())
