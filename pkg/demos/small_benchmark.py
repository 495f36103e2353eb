"""A small seeded benchmark written to CSV through the command-line runner.

Run from the repository root; equivalent to ``drbqo run demos/small_benchmark.cfg``.
"""

# %%
from pathlib import Path

from drbqo.cli import cmd_run, read_raw

here = Path(__file__).parent
code = cmd_run(here / "small_benchmark.cfg", jobs=1)
print("exit code", code)

# %%
rows = read_raw(here / "results" / "raw.csv")
last = [r for r in rows if r["iteration"] == max(r["iteration"] for r in rows)]
for r in last:
    print(r["algorithm"], r["rho"], int(r["repetition"]), round(r["rho_regret"], 4))
