"""Observer error decay on the Van der Pol ring, and how the rate follows c.

Five followers sit on a directed ring with only node 1 hearing the leader.
Each runs a canonical-form observer; the coupling gain c scales the
consensus correction. Raising c should speed up convergence, and the
Lyapunov certificate gives a guaranteed rate for ``V = e^T P2 e`` that the
simulation must beat.

Run: python demos/observer_gain_sweep.py
"""

import numpy as np

from distobs.cli import bundled_scenarios
from distobs.observer import convergence_certificate
from distobs.scenario import load_scenario
from distobs.sim import build_system, fit_decay_rate, simulate

base = load_scenario(bundled_scenarios()['vdp-observer'])
print(f"ring of {base.nodes}, pinned at {list(base.pins)}; T = {base.T:g} s")
print(f"{'c':>5} {'|e(T)|/|e(0)|':>14} {'fit rate':>9} {'V rate':>8} "
      f"{'certified':>10}")

for c in (10.0, 20.0, 40.0):
    sc = base.replace(c=c)
    sys = build_system(sc)
    tr = simulate(sc, sys)
    cert = convergence_certificate(sys.leader, sys.gain, sys.graph, sc.mu)
    E = tr.e.reshape(len(tr.t), -1)
    V = np.einsum('ti,ij,tj->t', E, cert.P2, E)
    ratio = (tr.e_norm[-1] / tr.e_norm[0]).max()
    rate = fit_decay_rate(tr.t, tr.e_total, t_start=1.0).rate
    print(f"{c:5.0f} {ratio:14.2e} {rate:9.3f} {fit_decay_rate(tr.t, V).rate:8.3f} "
          f"{cert.decay_rate_bound:10.3f}")

# The ratio bottoms out near 1e-13 instead of decaying further: leader and
# observers are integrated in different coordinates, so RK4 truncation leaves
# a small floor, which the fits exclude.
