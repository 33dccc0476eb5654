"""Long-run capital income tax by age at the bottom, middle and top of I."""
import numpy as np

from tieq.model import OgEconomy
from tieq import fiscal as fs, ogsolver as og

econ = OgEconomy.make()
I = og.steady_state_interval(econ)
rule = fs.allocation_rule(econ)
ages = np.array([0, 5, 10, 15, 20, 30, 50, 80])
print("age " + " ".join(f"{a:8.0f}" for a in ages))
for frac in (0.05, 0.5, 1.0):
    kb = I.at(frac)
    eta = fs.long_run_tax(econ, kb, rule, ages)
    n0 = fs.cutoff_age_numeric(econ, kb, rule)
    cut = "none" if n0 is None else f"{n0:.3f}"
    print(f"kbar={kb:7.3f} " + " ".join(f"{x:8.4f}" for x in eta) + f"  cutoff {cut}")
