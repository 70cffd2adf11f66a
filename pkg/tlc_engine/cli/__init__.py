"""
Command-line front end for TLC Engine
"""

from .main import build_parser, main

__all__ = ["build_parser", "main"]
