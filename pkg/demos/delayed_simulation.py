"""Simulate x'(t) = x(t - 1) with and without an impulse, then check the adjoint.

Run: python demos/delayed_simulation.py
"""

import numpy as np

from impdelay import ImpulsiveControl, VectorMeasure, builtin_scenario, certify, simulate

spec = builtin_scenario("delayed_linear")

print("cells   x(2) no impulse   x(2) unit impulse at t=1")
for cells in (64, 256, 1024):
    plain = simulate(spec, spec.zero_control(), [1.0], cells).final()[0]
    kick = ImpulsiveControl(VectorMeasure(1, spec.T, [(1.0, 1.0)]))
    kicked = simulate(spec, kick, [1.0], cells).final()[0]
    print(f"{cells:5d}   {plain:.12f}    {kicked:.12f}")
print("closed form: 3.5 and 4.5\n")

# The cost is x(T); the multiplier is p = -1 on [1, 2] and p(t) = t - 2 before.
traj = simulate(spec, spec.zero_control(), [1.0], 512)
cert = certify(spec, (spec.zero_control(), traj))
t = cert.adjoint.times
err = np.max(np.abs(cert.adjoint.p[:, 0] - np.where(t >= 1, -1.0, t - 2.0)))
print(f"adjoint error against the closed form: {err:.2e}")
for name, value in cert.residuals.items():
    print(f"  {name:22s} {value:.3e}  {'ok' if cert.verdicts[name] else 'FAILED'}")
