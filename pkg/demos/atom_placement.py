"""Find where to place one unit of impulse mass, then certify the answer.

The terminal cost (x(T) - 1)^2 wants total mass 1 and the impulse cost
(t - 0.5)^2 prefers t = 0.5.  The optimizer searches over atoms at all grid
nodes; the certificate evaluates the maximum-principle conditions.

Run: python demos/atom_placement.py
"""

import time

from impdelay import ImpulsiveControl, Transcription, VectorMeasure, builtin_scenario, certify, optimize, simulate

spec = builtin_scenario("atom_placement")
t0 = time.perf_counter()
res = optimize(spec, Transcription(spec, 64), seed=0)
print(f"optimizer: cost {res.cost:.3g} after {time.perf_counter() - t0:.1f}s (best start {res.best_start})")
for t, w in zip(res.control.mu.atom_times, res.control.mu.atom_weights):
    print(f"  atom at t = {t:.4f} with mass {w[0]:.6f}")

for label, ctrl in (("optimizer output", res.control),
                    ("atom moved to 0.3", ImpulsiveControl(VectorMeasure(1, 1.0, [(0.3, 1.0)])))):
    cert = certify(spec, (ctrl, simulate(spec, ctrl, [0.0], 64)), lam=1.0, tol=1e-3)
    print(f"\n{label}: {'passes' if cert.passed else 'fails at ' + cert.first_failure}")
    for name, value in cert.residuals.items():
        print(f"  {name:22s} {value:.4f}")
