"""When does spreading an impulse into a short pulse reproduce its effect?

Three sequences of ordinary (atom-free) inputs approach the same unit atom at a
fixed time.  With a continuous gain the trajectories converge; when the gain
switches exactly at the atom time, or the pulse comes from switching the
ordinary control, a gap of size one persists.

Run: python demos/approximation_limits.py
"""

import numpy as np

from impdelay import ControlPath, ImpulsiveControl, VectorMeasure, builtin_scenario
from impdelay.approximation import compare_sequence, density_sequence, switch_pulse_sequence

widths = [2.0 ** -k for k in range(2, 9)]

spec = builtin_scenario("continuous_gain")
atom = ImpulsiveControl(VectorMeasure(1, 1.0, [(0.25, 0.5)]))
rep = density_sequence(spec, atom, [1.0], widths, 1024)
print("continuous gain 1 + t/2, atom 0.5 at t = 0.25")
for w, e in zip(rep.widths, rep.endpoint_errors):
    print(f"  width {w:.5f}  endpoint error {e:.3e}")

spec = builtin_scenario("step_gate")
atom0 = ImpulsiveControl(VectorMeasure(1, 1.0, [(0.0, 1.0)]))
rep = density_sequence(spec, atom0, [0.0], widths[:5], 256)
print("\ngain switching on right after t = 0, atom at 0")
for w, g, e in zip(rep.widths, rep.measure_gaps, rep.endpoint_errors):
    print(f"  width {w:.5f}  measure gap {g:.3f}  endpoint gap {e:.3f}")

spec = builtin_scenario("shrinking_pulse")
ref = ImpulsiveControl(VectorMeasure(1, 1.0, [(0.0, 1.0)]), ControlPath.constant(1.0, [0.0]))
members = switch_pulse_sequence(ref, [1.0], widths[:5])
rep = compare_sequence(spec, ref, [0.0], members, widths[:5], 256)
print("\ngain equal to the ordinary control, which pulses to 1 on [0, width)")
for w, g, e in zip(rep.widths, rep.measure_gaps, rep.endpoint_errors):
    print(f"  width {w:.5f}  measure gap {g:.3f}  endpoint gap {e:.3f}")
print(f"verdict: {rep.verdict}")
