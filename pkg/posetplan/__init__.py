"""posetplan - Minimum-time multi-agent planning under collaborative sc-LTL tasks."""

__version__ = "0.1.0"
