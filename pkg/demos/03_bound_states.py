# Positive eigenvalues of L + sigma V.
#
# In d = 3 a point potential binds only above a critical coupling, which
# for V = delta equals 1 / G(0) with G(0) the Watson integral.  In d = 1
# and d = 2 any positive bump binds.  In d = 1 even a potential with zero
# sum binds, and an explicit test function shows it.
from __future__ import annotations

import math

from pamlab.lattice import BoxDomain, JumpKernel, Potential
from pamlab.spectral import SchrodingerOp, sigma_cr, top_eigenvalue
from pamlab.zero_mean import confirm_positive_eigenvalue, zero_mean_1d_construct

nn3 = JumpKernel.nearest_neighbor(3)
res = sigma_cr(nn3, Potential.delta(3))
watson = math.sqrt(6) / (32 * math.pi**3) * math.prod(math.gamma(x / 24) for x in (1, 5, 7, 11))
print(f"d=3: sigma_cr = {res.sigma_cr:.8f}, 1 / Watson = {1 / watson:.8f}")

for factor in (0.9, 1.1):
    op = SchrodingerOp(nn3, Potential.delta(3), factor * res.sigma_cr, 1.0,
                       BoxDomain(3, 5, "killed"))
    rep = top_eigenvalue(op)
    print(f"  sigma = {factor} sigma_cr: box trace {[(L, round(l, 6)) for L, l in rep.box_trace]}"
          f" -> found = {rep.positive_eigenvalue_found}")

# d = 1: weak coupling still binds, with lambda = sqrt(1 + sigma^2) - 1
nn1 = JumpKernel.nearest_neighbor(1)
for s in (0.05, 0.2, 1.0):
    rep = top_eigenvalue(SchrodingerOp(nn1, Potential.delta(1), s, 1.0, BoxDomain(1, 50, "killed")))
    print(f"d=1, sigma={s}: lambda_top = {rep.lambda_top:.3e}"
          f" (closed form {math.sqrt(1 + s * s) - 1:.3e})")

# zero-sum potential 2 delta_0 - delta_1 - delta_-1
V = Potential.from_entries(1, {(0,): 2.0, (1,): -1.0, (-1,): -1.0})
for s in (0.1, 0.05, 0.02):
    rep = zero_mean_1d_construct(V, s)
    count, lam = confirm_positive_eigenvalue(V, s, 2 * rep.m)
    print(f"sigma={s}: m={rep.m}, Q(phi)={rep.quadratic_form:.4e}, "
          f"eps/sigma^2={rep.epsilon / s**2:.4f} (limit {rep.c2_plus + rep.c2_minus}), "
          f"dense count={count}, lambda={lam:.3e}")
