"""labelforge: a self-hostable data-labeling service for building supervised
text-classification training sets, with active learning and inter-rater
reliability statistics."""

__version__ = "0.1.0"
