"""
Stationarity, constraint qualification and the sublinear rate bound.

Along a run the best stationarity measure so far must stay below
a * sqrt(L(X0) - L*) / sqrt(i + 1), where a comes from the sufficient
decrease and witness constants measured during the run.
"""

import numpy as np

from dasf import MixtureSource, NetworkModel, SolverConfig, make_problem, run_dasf
from dasf.diagnostics import compressed_licq_check, optimal_value, rate_bound_check

rng = np.random.default_rng(7)
net = NetworkModel.uniform(K=4, M_k=5, Q=1)
source = MixtureSource.random(net, rng)
problem = make_problem("maxsnr", net)
stats = source.statistics()

state = run_dasf(problem, source, SolverConfig("power", n_iter=1), 300, rng=rng, stop_tol=0.0)
L_star = optimal_value(problem, stats)
w = [t.w for t in state.trace]
cert = rate_bound_check(w, [t.R_hat for t in state.trace], [t.c_hat for t in state.trace],
                        state.initial_objective, L_star)
print(f"rate constant r = {cert.r_hat:.3e}, a = {cert.a_hat:.2f}, bound holds: {cert.passed}")
for i in (0, 9, 49, 99, 299):
    print(f"  i={i:3d}  min w = {cert.min_w[i]:.3e}  bound = {cert.bound[i]:.3e}")

licq = compressed_licq_check(problem, stats, state.X)
print(f"compressed LICQ at the final point: passed={licq.passed}, sigma_min={licq.sigma_min:.3f}")
