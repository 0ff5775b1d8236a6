"""Shoot the closed gap recursion for the spread in ticks and compare it with
the runaway bound and with a simulated spread.

    python demos/gap_chain_spread.py
"""

from santafe_lob import DESK, SeedSpec, gap_chain_shoot, run
from santafe_lob.estimators import EstimatorSettings
from santafe_lob.gapchain import gap_threshold

print(f"{'mu':>6} {'g0* (ticks)':>12} {'bound':>9} {'simulated':>10} {'bisections':>11}")
for i, mu in enumerate((1.0, 10.0, 100.0)):
    p = DESK.with_mu(mu)
    res = gap_chain_shoot(p)
    rep = run(p, SeedSpec(3, i), None, 500.0, settings=EstimatorSettings(density_rmax=0.01))
    print(f"{mu:6g} {res.g0:12.2f} {gap_threshold(p):9.2f} {rep.spread_mean / p.delta:10.2f} {res.iterations:11d}")

chain = gap_chain_shoot(DESK.with_mu(10.0)).chain
print("\nfirst gaps at mu=10:", " ".join(f"{g:.2f}" for g in chain.g[:8]), "...", f"limit {chain.limit:.2f}")
