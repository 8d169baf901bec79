"""
Tensor network model: dense primitives and the matrix product state.
"""
