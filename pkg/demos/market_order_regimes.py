"""Simulate the desk-scale book at a few market-order intensities and set the
measured spread, impact and diffusion next to the mean-field values.

With few market orders the mean-field numbers land close; with many the
spread keeps its linear growth while the diffusion constant falls far short
of the mean-field cube law.  Short runs leave the small-mu diffusion and lag
columns noisy because market orders are rare there.

    python demos/market_order_regimes.py [measure_time]
"""

import sys

from santafe_lob import DESK, SeedSpec, run, theory_metrics
from santafe_lob.estimators import EstimatorSettings

T = float(sys.argv[1]) if len(sys.argv) > 1 else 5000.0

print(f"lambda={DESK.lam:g}  v={DESK.v:g}  delta={DESK.delta:g}  L={DESK.cutoff}  measure_time={T:g}\n")
print(f"{'mu':>6} {'spread/th':>10} {'impact/th':>10} {'D/th':>10} {'R(20)':>7}")
for i, mu in enumerate((0.1, 1.0, 10.0, 100.0)):
    p = DESK.with_mu(mu)
    rep = run(p, SeedSpec(1, i), None, T, settings=EstimatorSettings(density_rmax=0.01))
    th = theory_metrics(p)
    print(f"{mu:6g} {rep.spread_mean / th.spread:10.3f} {rep.impact_instant / th.impact:10.3f} "
          f"{rep.diffusion_D / th.D:10.3g} {rep.impact_ratio[19]:7.3f}")
