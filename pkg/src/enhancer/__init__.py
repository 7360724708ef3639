"""
Enhancer Package

This package contains the encoder-decoder enhancement network and the
gain/phase spectrum reconstruction.
"""
