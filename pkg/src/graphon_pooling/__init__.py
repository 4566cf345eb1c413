"""Graphon pooling of graph signals and convolutional operators."""

__version__ = "0.1.0"
