"""Tree classifiers, feature-importance extraction and Weighted Jaccard concordance."""

__version__ = "0.1.0"
