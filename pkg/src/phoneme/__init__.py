"""
Phoneme Package

This package contains the frame-wise phoneme classifier, its cross-entropy
loss and accuracy metrics, and alignment file handling.
"""
