"""recdrop: a desk-scale laboratory for recency bias in recurrent recommenders.

Simulates clustered Markov-chain user trajectories, trains a small gated
recurrent next-item model with and without recency dropout, and quantifies
the effect through ranking/diversity/calibration metrics, bias curves, and
Jacobian spectral analysis.
"""

__version__ = "0.1.0"
