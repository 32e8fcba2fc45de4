"""
Computational services: graph storage, numerics, sampling, model, value learning, reporting.
"""
