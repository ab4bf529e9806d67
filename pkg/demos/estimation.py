"""Estimate theta from an observed record of negative jumps.

Only the jump times and magnitudes are visible. The rate of negative jumps
gives lambda / L(theta); the mean magnitude gives theta through L.
"""
from unseen.chain import ChainParams, StateDistribution
from unseen.infer import estimate_theta, mu_from_event_rate
from unseen.sim import extract_negjumps, sample_path

truth = ChainParams.from_theta(3.0, 0.5)
horizon = 4000.0
path = sample_path(truth, StateDistribution.equilibrium(truth), horizon, seed=12)
record = extract_negjumps(path).hidden()
print(f"observed {len(record)} negative jumps over [0, {horizon:g}]")

report = estimate_theta(record.magnitudes, horizon=horizon, record=record)
mu = mu_from_event_rate(report.mu_hat, report.theta_hat)
print(f"theta_hat = {report.theta_hat:.3f}  (truth {truth.theta}, asymptotic se {report.se_asymptotic:.3f})")
print(f"event rate = {report.mu_hat:.4f}, implied mu = {mu:.4f}  (truth {truth.mu})")
for m in (100, 1000, 10_000):
    print(f"P(all later estimates within 0.5 after {m:>6} jumps) >= {report.consistency_bound(m, 0.5):.4f}")
