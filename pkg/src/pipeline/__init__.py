"""
Pipeline Package

This package contains the experiment pipeline: run configuration, toy corpus
synthesis, variant wiring, training, evaluation, ablation and the gradient
diagnostics suite.
"""
