"""Phase locking of a slowly chirped oscillator driven by both an external and a parametric pump."""

__version__ = "0.1.0"
