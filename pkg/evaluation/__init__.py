"""Verification and reporting: gradient checks, loss oracles, reports and ablation sweeps."""
