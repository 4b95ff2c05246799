"""Ranked caption chains: chain generation, listwise preference losses,
a toy differentiable policy, and caption/QA evaluation."""

__version__ = "0.1.0"
