"""
subgradlab: subgradient sequences on stratified piecewise-smooth functions, with diagnostics.
"""

__version__ = "0.1.0"
