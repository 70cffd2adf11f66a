"""
Core models, configuration and control law for TLC Engine
"""
