"""Uncertainty-aware disease-diagnosis benchmark toolkit.

Builds diagnosis benchmarks from clinical notes and diagnostic criteria,
runs chat-completion endpoints over the four diagnostic subtasks, scores
predictions with bootstrap confidence intervals, and hosts the expert
review service used to verify masked notes and grade explanations.
"""

__version__ = "0.1.0"
