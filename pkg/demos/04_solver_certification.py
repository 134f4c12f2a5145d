"""
Checking the inexact-solver contract.

A solver qualifies when it starts at the warm start, decreases the local
objective by at least R |dX|^2 per step, and can exhibit a subgradient at
the new iterate no larger than c |dX|, with R and c bounded away from 0 and
infinity.  Gradient ascent is included as a solver that must fail.
"""

from dasf import SolverConfig
from dasf.harness import certify_solver, load_scenario

maxsnr = load_scenario("maxsnr-desk")
mwf = load_scenario("mwf-desk")
mwf_smooth = load_scenario("mwf-desk")
mwf_smooth.problem_params = {"weight": 0.0}

checks = [
    (maxsnr, SolverConfig("power", n_iter=10)),
    (maxsnr, SolverConfig("projgd", n_iter=10)),
    (mwf, SolverConfig("proxgd", n_iter=10)),
    (mwf_smooth, SolverConfig("gd", n_iter=10)),
    (mwf_smooth, SolverConfig("newton", n_iter=1)),
    (mwf_smooth, SolverConfig("reg-exact", reg=0.5)),
    (maxsnr, SolverConfig("ascent", n_iter=3)),
]
for scenario, solver in checks:
    cert = certify_solver(scenario, 20, solver)
    verdict = "passes" if cert.passed else f"fails ({len(cert.violations)} violations)"
    print(f"{scenario.problem:7s} {cert.solver:14s} R >= {cert.R_inf:9.3e}  c <= {cert.c_sup:9.3e}  {verdict}")
