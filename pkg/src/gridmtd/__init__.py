"""Measurement-driven moving-target defense toolkit for power grids.

Subpackages cover the network model and measurement chain (grid),
weighted-least-squares estimation (estimation), stealthy injection
crafting (attack), the sequence autoencoder detector (detector),
physics-informed attack identification (identifier), the two-stage
susceptance re-dispatch optimizer (mtd), the evaluation harness
(harness), and the HTTP service plus CLI front ends (service, cli).
"""

__version__ = "0.1.0"
