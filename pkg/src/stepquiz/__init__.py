"""stepquiz: step-by-step math assessment engine with reliability analytics."""

__version__ = "0.1.0"
