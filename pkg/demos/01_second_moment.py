# Three routes to the second moment of du = kappa L u dt + u dW on Z.
#
# With u(0, .) = 1 and white-in-space noise (b = delta), m2(t) = <u(t, 0)^2>
# can be computed by
#   1. integrating dm/dt = 2 kappa L m + B m (deterministic),
#   2. Feynman-Kac: two walkers, weight exp(time spent together),
#   3. simulating the SPDE itself and averaging u^2.
# Its growth rate is the top of the spectrum of 2 kappa L + B.
from __future__ import annotations

import math

import numpy as np

from pamlab.lattice import BoxDomain, CorrelationKernel, JumpKernel, correlator_from_b
from pamlab.moments import gamma2, solve_m2
from pamlab.spde import SpdeConfig, run_ensemble
from pamlab.walks import fk_moment_curve

kernel = JumpKernel.nearest_neighbor(1)
b = CorrelationKernel.delta(1)
B = correlator_from_b(b)
kappa = 0.5
times = [0.5, 1.0, 2.0]

# route 1: RK4 on a periodic box of radius 64
ode = solve_m2(kernel, kappa, B, times, BoxDomain(1, 64)).at_origin()

# route 2: 10^5 two-walker paths
fk = fk_moment_curve(kernel, 2, kappa, B, times, 100_000, gen=1)

# route 3: 2000 SPDE members with the exponential splitting scheme
cfg = SpdeConfig(kernel, b, kappa, BoxDomain(1, 64), dt=0.02)
sim = run_ensemble(cfg, 2.0, 2000, 2, base_seed=1, record_times=times)
m2_sim, se_sim = sim.moment(2)

print(" t     ode       FK (+-se)          SPDE (+-se)")
for k, t in enumerate(times):
    print(f"{t:4.1f}  {ode[k]:.4f}   {fk[k].estimate:.4f} +- {fk[k].stderr:.4f}"
          f"   {m2_sim[k]:.4f} +- {se_sim[k]:.4f}")

# the growth rate: top eigenvalue of 2 kappa L + delta, closed form sqrt(4 kappa^2 + 1) - 2 kappa
g2 = gamma2(kernel, kappa, B)
print(f"\ngamma_2 from the eigenvalue solver: {g2:.6f}")
print(f"closed form:                        {math.sqrt(4 * kappa**2 + 1) - 2 * kappa:.6f}")

# ln m2(t) / t carries an O(log t / t) prefactor, the local slope does not
late = solve_m2(kernel, kappa, B, np.arange(2.0, 13.0, 2.0), BoxDomain(1, 64)).at_origin()
for t, a, c in zip(np.arange(2.0, 12.0, 2.0), late[:-1], late[1:]):
    print(f"t={t:4.1f}: ln m2 / t = {math.log(a) / t:.4f}, "
          f"local slope = {(math.log(c) - math.log(a)) / 2:.4f}")
