"""Find the positive steady state and compare it with exp(V - v_bar) <= U <= exp(V).

As the boundary level shrinks the steady state approaches the logistic
equilibrium U = lambda / mu.
"""
import numpy as np

from chemocons import Field, Grid, ModelParams, find_steady

for v_bar in (0.2, 0.1, 0.05):
    p = ModelParams(1.0, 1.0, v_bar, Field.constant(Grid.rectangle(48), 0.5))
    ss = find_steady(p, tol_ss=1e-10)
    b = ss.bound_report
    print(f"v_bar={v_bar:5.2f}  marched to t={ss.marched_time:6.1f}  "
          f"U in [{ss.U.values.min():.5f}, {ss.U.values.max():.5f}]  "
          f"max|U - 1| {np.max(np.abs(ss.U.values - 1)):.2e}")
    print(f"            lower margin {b.lower_margin:.3e}  upper margin {b.upper_margin:.3e}  "
          f"v_bar - max V {b.v_upper_margin:.2e}")
