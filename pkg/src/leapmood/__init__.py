"""Lightweight mood prediction from chat text.

Phonetic-hashing preprocessing, a recurrent + CRF emotion recognizer written
directly in numpy, K-means mood aggregation over time windows, and a genetic
hyperparameter tuner that trades accuracy against parameter count.
"""

__version__ = "0.1.0"
