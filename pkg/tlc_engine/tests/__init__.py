"""
Tests package for TLC Engine
"""