"""
Evaluation Package

The combined training objective and the SSNR / SNR quality metrics.
"""
