# Contract Sectioner

__version__ = "1.0.0"
