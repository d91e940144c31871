"""Expected Lipschitz-Killing curvatures and excursion probabilities for
Gaussian and Hermite-subordinated needlet fields on the sphere."""

__version__ = "0.1.0"
