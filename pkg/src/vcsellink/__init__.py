"""Simulation and learning toolkit for VCSEL-based short-reach optical links.

Physics-level reference simulation (rate equations, fiber, detector),
differentiable surrogate models (second-order Volterra, tapped-delay NN),
receiver equalization and transmitter predistortion, and end-to-end
autoencoder transceiver learning, plus a gradient-free differential
evolution trainer.
"""

__version__ = "0.1.0"
