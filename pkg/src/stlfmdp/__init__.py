"""Learning policies for STL objectives on flag-augmented MDPs."""

__version__ = "0.1.0"
