"""
Shared modules for the sparse subset-selection solvers
"""
