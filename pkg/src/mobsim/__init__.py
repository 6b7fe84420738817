"""Desk-scale human mobility simulation.

Builds location graphs from check-in trajectories, trains a graph-attention /
GRU sequence generator adversarially against a recurrent discriminator, and
scores generated trajectories against held-out data with distributional
divergence metrics.
"""

__version__ = "0.1.0"
