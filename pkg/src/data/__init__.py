"""
Image I/O, dataset layout and synthetic data.
"""
