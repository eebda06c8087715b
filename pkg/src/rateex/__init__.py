"""Rate-exponent regions for distributed hypothesis testing against conditional independence."""

__version__ = "0.1.0"
