"""Kernel Verify: learned spectral kernels for client-specific verification"""

__version__ = "0.1.0"
__author__ = "Kernel Verify Team"
