"""
PbDr Package

Phoneme-posterior to (gamma, beta) mapping and the channel-shared affine
modulation of encoder features.
"""
