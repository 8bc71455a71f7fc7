"""Conductivity imaging from the magnitude of one internal current density.

Subpackages cover the synthetic forward problem on the unit square, a
tape-based reverse-mode autodiff engine, the feedforward network ansatz,
the relaxed weighted least-gradient loss, first-order training, and the
reconstruction pipelines (network-based and the alternating iterative
baseline), all wired together by the ``cdii`` command line tool.
"""

__version__ = "0.1.0"
