"""Monte-Carlo toolkit for unitarily invariant valuations on C^n."""

__version__ = "0.1.0"
