"""Resonant averages of 1/d for an asteroid whose orbit crosses the Earth's.

For a 5:8 resonance with the Earth, the average of 1/d over the fast angle
at fixed resonant angle sigma blows up at the critical angle sigma_c, where
the two bodies can actually meet. Its Fourier partial sums stay finite, and
two independent ways of computing them agree. Their derivative jumps across
the crossing carry a Dirichlet factor that concentrates at sigma_c as N grows.

Run: python demos/resonant_averages.py   (about half a minute)
"""

import math

import numpy as np

from rescross.diagnostics import UnimodularChart, coefficients_one, coefficients_two, jump_delta_scan, kbar, partial_sum
from rescross.geometry import TwoOrbitConfig, local_minima
from rescross.hamiltonian import critical_phase
from rescross.kepler import KeplerianElements, ResonanceSpec
from rescross.scenarios import crossing_orbit_with_a, resonant_semimajor_axis

spec = ResonanceSpec(8, -5)
earth = KeplerianElements(1.0, 0.0167, 0.0, 0.0, 1.8)
asteroid = crossing_orbit_with_a(earth, 1.0, resonant_semimajor_axis(1.0, spec), 0.4, 0.2)
cfg = TwoOrbitConfig(asteroid, earth, 3.0e-6)
chart = UnimodularChart.from_resonance(8, -5)

mins = local_minima(cfg)
mp = mins[0]
sc = critical_phase(mp, spec)
print(f"asteroid a = {asteroid.a:.5f} au, minimal distance {mp.d:.1e} au, sigma_c = {math.degrees(sc):.3f} deg")

print("\naverage of 1/d approaching sigma_c from above")
for k in range(3, 11):
    print(f"  sigma_c + 2^-{k:<2}  {kbar(sc + 2.0**-k, cfg, chart, mins):.6f}")

c1 = coefficients_one(cfg, chart, 10, mins)
c2 = coefficients_two(cfg, chart, 10, mins)
sigma = np.linspace(0, 2 * math.pi, 361)
print("\npartial sums: averaging first vs Fourier first")
for N in (0, 1, 3, 10):
    diff = np.abs(partial_sum(c1, sigma, N) - partial_sum(c2, sigma, N)).max()
    print(f"  N = {N:2d}: max over sigma {partial_sum(c1, sigma, N).max():.6f}, procedures differ by {diff:.1e}")

# the jump of dK_N/dG across the crossing, as a function of sigma
Ns = [1, 3, 15, 63]
scan = jump_delta_scan(cfg, 1, Ns, chart, minimum=mp)
width = [np.sum(np.abs(p) > 0.5 * np.abs(p).max()) * 360 / len(scan.sigma) for p in scan.profiles]
print("\njump profile of dK_N/dG: half-height width shrinks like 1/N")
for N, w, p in zip(Ns, width, scan.profiles):
    print(f"  N = {N:2d}: peak {np.abs(p).max():.3e}, width {w:.2f} deg, integral/limit "
          f"{np.sum(p) * 2 * math.pi / len(p) / scan.factor:.6f}")
