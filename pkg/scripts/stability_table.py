"""Stability value, convergence rate and renegotiation derivative across I."""
import numpy as np

from tieq.model import OgEconomy
from tieq import ogsolver as og, phase as ph, reneg as rn

econ = OgEconomy.make()
I = og.steady_state_interval(econ)
print(f"I = ({I.k_lo:.4f}, {I.k_hi:.4f})")
print(f"{'kbar':>8} {'f_prime':>9} {'stab_cf':>11} {'stab_num':>11} {'rate':>11} {'dV/dkbar':>10} {'fd':>10}")
for frac in np.linspace(0.1, 0.9, 9):
    kb = I.at(frac)
    pair, pol = og.solve_value_pair(econ, kb)
    cf, num = og.stability_test(econ, pair, kb)
    tr = ph.simulate_policy(pol, pair, econ.tech, kb - 0.1 * (kb - pol.domain[0]),
                            min(30.0 / abs(cf), 5e4), n_out=2001)
    rate = ph.convergence_rate(tr)
    print(f"{kb:8.4f} {econ.tech.df(kb):9.6f} {cf:11.4e} {num:11.4e} {rate:11.4e} "
          f"{rn.renegotiation_derivative(econ, kb):10.6f} {rn.renegotiation_derivative_fd(econ, kb):10.6f}")
