"""
Utils Package

This package contains shared helpers: JSON persistence, seeding, logging setup
and the project's exception types.
"""
