"""
Stochastic asymptotical regularization (SAR) for nonlinear ill-posed equations.

The package is split the way the pipeline uses it:
  core        grid functions, inner products, forward-operator contract
  wiener      Q-Wiener increments with counter-based random streams
  flow        the ensemble Euler-Maruyama integrator and discrepancy stopping
  problems    elliptic, diagonal and oscillatory benchmark operators
  theory      constants chain and numerical inequality checks
  diagnostics error metrics, bias-variance split, bands, rate regression
  config      INI config loading for the command line runner
  experiments run/rates/constants/check pipelines and their output files
"""
from __future__ import annotations

__version__ = "1.0.0"
