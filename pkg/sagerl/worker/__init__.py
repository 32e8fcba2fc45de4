"""
Training loops, the value-learning pipeline and the benchmark harness.
"""
