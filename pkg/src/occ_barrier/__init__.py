__all__ = [
    "config",
    "data",
    "exceptions",
    "gradcheck",
    "hypersphere",
    "io",
    "losses",
    "metrics",
    "nn",
    "trainer",
]
__version__ = "0.1.0"
