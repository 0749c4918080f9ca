"""Fast EM/IR hotspot checks: synthetic designs, a DC sign-off solver, window features and classifiers."""

__version__ = "0.1.0"
