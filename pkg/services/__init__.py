"""
Entry-point services for the sparse subset-selection solvers
"""
