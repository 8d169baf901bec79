"""
Strided tensor network image segmentation package.
"""
