"""
PbDr Speech Enhancement Package

This package contains the signal processing, network and pipeline modules for
phoneme-conditioned speech enhancement.
"""
