"""
Partitioned fluid-structure interaction with explicit Robin-Neumann
coupling and jagged (multirate) time steps.
"""
__version__ = '0.1.0'
