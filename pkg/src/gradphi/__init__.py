"""Monte Carlo and lattice-PDE laboratory for the gradient interface
model: Langevin samplers of the lattice Gibbs measures, exact Gaussian
oracles, parabolic/elliptic lattice solvers, stochastic representations
of the associated variance problems, surface-tension estimators, and
functional-inequality diagnostics.
"""

__version__ = "0.1.0"
