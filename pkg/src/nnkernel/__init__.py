"""
Neural Network Kernel Package

This package contains the operator set shared by all networks, the operator
graph with forward/backward passes, the finite-difference gradient checker,
the Adam optimizer wrapper and the checkpoint format.
"""
