"""
Distance-Forward - local-learning training library and CLI
"""

__version__ = "1.0.0"
