# %% [markdown]
# Running the audit pipeline on a 2-vertex 2-graph through the CLI entry point.
# The same run is available from the shell as
#     kbratteli audit --config two_graph.yaml --out out/two_graph

# %%
import json
import tempfile
from pathlib import Path

import yaml

from kbratteli.cli import main

config = {
    "graph": {"matrices": [[[1, 1], [1, 1]], [[1, 1], [1, 1]]]},
    "delta": 0.5,
    "s": [1.0, 1.5],
    "depth": 7,
    "t_grid": [0.001, 0.01, 0.1, 1.0],
    "seed": 3,
}

work = Path(tempfile.mkdtemp())
cfg_path = work / "two_graph.yaml"
cfg_path.write_text(yaml.safe_dump(config))
code = main(["audit", "--config", str(cfg_path), "--out", str(work / "out")])
print("exit code", code)

# %% [markdown]
# Each audit reports a status; hard invariants decide the exit code.

# %%
report = json.loads((work / "out" / "report.json").read_text())
for audit in report["audits"]:
    tag = f" s={audit['s']}" if "s" in audit else ""
    print(f"{audit['name']:<28}{tag:<8} {audit['status']}")
print(sorted(p.name for p in (work / "out").iterdir()))
