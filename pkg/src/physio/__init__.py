"""Grounded physiotherapy advisor.

Links user complaints to a curated condition knowledge base, retrieves
supporting pages with BM25, generates an answer with sentence-level source
references, and attaches exercise and over-the-counter medication
recommendations.
"""

__version__ = "0.1.0"
