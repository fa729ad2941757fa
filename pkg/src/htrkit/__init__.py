"""Desk-scale handwriting-line recognition toolkit.

Trains CTC sequence models with multi-task n-gram target decompositions
(single-task, block multi-task, hierarchical multi-task) on synthetic line
images, builds backoff n-gram language models, and decodes unigram
posteriors greedily or with LM-fused prefix beam search.
"""

__version__ = "0.1.0"
