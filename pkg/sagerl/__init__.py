"""
sagerl - GraphSAGE node classification with uniform and value-learned neighborhood sampling.
"""

__version__ = "0.1.0"
