"""Executable abstract file system model with asynchronous writes, a
buffered simulator, and a refinement harness connecting the two."""

__version__ = "0.1.0"
