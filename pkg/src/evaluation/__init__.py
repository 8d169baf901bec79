"""
Evaluation metrics and reports.
"""
