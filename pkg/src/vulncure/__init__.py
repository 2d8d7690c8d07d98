"""Clean up NVD vulnerability feeds: disclosure dates, vendor/product names,
CWE fields and v3 severity backfill."""

__version__ = "0.1.0"
