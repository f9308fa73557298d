"""W-PIR#: weakly-private information retrieval with escape patterns for heterogeneously trusted servers"""

__version__ = "0.1.0"
