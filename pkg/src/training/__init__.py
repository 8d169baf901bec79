"""
Losses, optimizer, training loop, checkpoints and whole-image prediction.
"""
