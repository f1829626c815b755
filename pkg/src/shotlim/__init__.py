"""Shot noise processes, their Levy-driven OU limits and the Gaussian diffusion approximation."""

__version__ = "0.1.0"
