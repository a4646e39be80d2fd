"""Moreau envelopes and resolvents of the built-in convex penalties.

For each penalty in the catalog we evaluate the resolvent J_eps, the
envelope phi_eps and its gradient on a few points, then confirm the
structural properties on random batches. Run with ``python3 demos/moreau_envelope.py``.
"""

import numpy as np

from yosida_bdsde.prox_core import (IndicatorHalfSpace, standard_catalog, yosida,
                                    yosida_properties_check)

rng = np.random.default_rng(0)
points = np.array([[-2.0], [-0.5], [0.0], [0.5], [2.0]])

print("One-dimensional penalties at eps = 0.25\n")
for kind, phi in standard_catalog(1).items():
    ev = yosida(phi, 0.25, points)
    print(f"{kind}")
    print("   u      J_eps(u)  phi_eps(u)  grad")
    for u, j, e, g in zip(points[:, 0], ev.resolvent[:, 0], ev.envelope, ev.gradient[:, 0]):
        print(f"  {u:5.2f}   {j:8.4f}  {e:9.4f}  {g:8.4f}")
    print()

# As eps shrinks the envelope climbs towards phi and the gradient steepens.
phi = IndicatorHalfSpace.nonnegative()
print("Indicator of [0, inf) at u = -0.5 as eps shrinks")
for eps in (1.0, 0.1, 0.01):
    ev = yosida(phi, eps, np.array([[-0.5]]))
    print(f"  eps={eps:5.2f}  phi_eps={ev.envelope[0]:9.3f}  grad={ev.gradient[0, 0]:8.2f}")
print()

print("Structural properties on 1000 random (u, v, eps, delta) in dimension 3")
for kind, phi in standard_catalog(3).items():
    u, v = rng.normal(scale=2.0, size=(2, 1000, 3))
    eps = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), 1000))
    delta = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), 1000))
    rep = yosida_properties_check(phi, eps, delta, u, v, rng=rng)
    print(f"  {kind:22s} passed={rep.passed}  worst margin={rep.worst_margin():.2e}")
