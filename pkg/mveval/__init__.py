"""
mveval - evaluation harness for single-view, test-time augmented (MV-Artificial)
and multi-photograph (MV-Real) inference of binary melanoma classifiers.
"""

__version__ = '0.1.0'
