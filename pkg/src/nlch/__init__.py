"""Nonlocal viscous Cahn-Hilliard equations with Neumann conditions and their local limit."""
__version__ = "0.1.0"
