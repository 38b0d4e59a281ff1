"""Turning the mixer waveplate trades purity for mixedness.

A half-waveplate spinning during the exposure scrambles the polarization;
the angle tau of the waveplate ahead of it sets how much of that disorder
ends up in the path state. Reconstructed purity is compared with the closed
form (5 + 4 cos^2 4tau) / 9.

With shot noise the points sit a little below the curve near the pure end.
Noise gives the raw estimate small eigenvalues of both signs; clipping the
negative ones and renormalizing hands the positive ones a share of the
weight, which pulls purity down. Without noise the curve is followed to
better than 1e-3.

Run: python demos/03_purity_curve.py
"""

from pathtomo import NoiseModel, sweep

rows = sweep("tau", [0, 5, 10, 15, 20, 22.5, 25, 30, 35, 40, 45],
             noise=NoiseModel(poisson=True, photon_budget=1e5), width=5)
print(" tau    fidelity  purity  theory")
for tau, fid, pur, theory in rows:
    bar = "#" * int(round(40 * (pur - 5 / 9) / (4 / 9)))
    print(f"{tau:5.1f}   {fid:.4f}   {pur:.4f}  {theory:.4f}  {bar}")
