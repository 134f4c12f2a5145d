"""
Running a shipped scenario through the experiment harness.

Equivalent command line:

    dasf run --config maxsnr-desk --out out/maxsnr-desk --budget-override 100

The output directory holds one CSV trace and one JSON summary per run,
ensemble percentiles on both x-axes, a diagnostics report and a manifest
with a SHA-256 hash of every file.
"""

import csv
import json
import sys
import tempfile
from pathlib import Path

from dasf.harness import load_scenario, run_experiment

scenario = load_scenario("maxsnr-desk")
scenario.runs, scenario.budget = 10, 100
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "maxsnr-desk"
status = run_experiment(scenario, out)
print(f"exit status {status}, artifacts in {out}")

with open(out / "ensemble_iterations.csv") as fh:
    rows = list(csv.DictReader(fh))
for row in rows[::20]:
    print(f"iteration {row['iteration']:>4}: median excess {float(row['median']):.3e}")

diag = json.loads((out / "diagnostics.json").read_text())
print("certificates passed:", diag["certificates_passed"])
print("files in manifest:", len(json.loads((out / "manifest.json").read_text())["files"]))
