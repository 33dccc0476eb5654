"""Selected steady state and fiscal numbers as the planner's rate falls."""
from tieq.model import OgEconomy
from tieq import fiscal as fs, ogsolver as og

base = OgEconomy.make()
print(f"{'rho':>7} {'k*':>10} {'f_prime':>10} {'subsidy':>9} {'formula':>9} {'cutoff':>8}")
for rho in (0.04, 0.02, 0.01, 0.005, 0.002, 0.001):
    e = base.with_(rho=rho)
    k = og.lrp_capital(e)
    print(f"{rho:7.3f} {k:10.3f} {e.tech.df(k):10.6f} {fs.subsidy_at(e, k):9.4f} "
          f"{fs.uniform_subsidy(e):9.4f} {fs.cutoff_age(e):8.3f}")
print(f"modified golden rule k = {og.golden_rule_capital(base):.4f}, market k_M = {fs.market_steady_state(base):.4f}")
