"""Video action recognition on synthetic trawl footage, with a dataset-bias audit suite."""

__version__ = "0.1.0"
