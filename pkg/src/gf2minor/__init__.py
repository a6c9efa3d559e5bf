"""Binary-matroid minors of sparse random GF(2) matrices."""

__version__ = "0.1.0"
