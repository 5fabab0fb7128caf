# %% [markdown]
# # Driving the command line
#
# `confsym report` runs the whole chain and writes a JSON report; a golden
# record pins the residuals for regression checks. The same entry point is
# callable from Python.

# %%
import json
import tempfile
from pathlib import Path

from confsym import cli

tmp = Path(tempfile.mkdtemp())
code = cli.main(["report", "--fixture", "hyperbolic-cylinder", "--n", "5", "--epsilon", "-1",
                 "--out", str(tmp / "report.json"), "--write-golden", str(tmp / "golden.json")])
print("exit code", code)

# %%
doc = json.loads((tmp / "report.json").read_text())
print(doc["status"], doc["flags"], doc["stages"]["classify"]["case"])
print(json.dumps(doc["timestamp"], indent=2))

# %% [markdown]
# Re-running against the golden record only passes when every residual is
# within 10% of the stored value (or both sit at rounding noise).

# %%
code = cli.main(["report", "--fixture", "hyperbolic-cylinder", "--n", "5", "--epsilon", "-1",
                 "--out", str(tmp / "again.json"), "--golden", str(tmp / "golden.json")])
print("exit code", code)
