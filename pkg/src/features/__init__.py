"""
Pixel features: local feature maps and patch ravel/unravel.
"""
