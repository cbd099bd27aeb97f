"""Off-policy evaluation with likelihood-ratio omission at irrelevant states."""

__version__ = "0.1.0"
