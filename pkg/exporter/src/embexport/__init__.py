"""Frozen essay-embedding exporter.

Encodes a corpus once with a pretrained encoder (first-position pooling,
eval mode, no fine-tuning) and writes a self-describing binary table the
scoring pipeline can load: one JSON header line, then n*d little-endian
float32 values in row-major order.
"""

__version__ = "0.1.0"
