"""Shadow credit-rating models: embedding networks, linear baselines, Shapley explanations."""

__version__ = "0.1.0"
