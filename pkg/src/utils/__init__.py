"""
Shared utilities: configuration, logging, errors and plotting.
"""
