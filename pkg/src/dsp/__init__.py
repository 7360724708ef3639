"""
DSP Package

This package contains deterministic signal processing: waveform I/O, STFT/ISTFT
with consistency projection, MFCC extraction and SNR-controlled mixing.
"""
