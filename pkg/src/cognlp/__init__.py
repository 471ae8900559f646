"""Word-level eye-tracking and EEG features for desk-scale NLP experiments."""

__version__ = "0.1.0"
