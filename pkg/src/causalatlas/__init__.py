"""causalatlas: cover-indexed causal world models with gluing diagnostics,
grounded counterfactual probes, drift diffs, and a navigable claims atlas."""

__version__ = "0.1.0"
