"""Monte Carlo and quadrature toolkit for the fluctuation limit of additive
functionals of two independent self-similar Gaussian processes."""

__version__ = "0.1.0"
