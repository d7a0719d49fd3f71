class AdapterError(Exception):
    """Export failed: bad input, unknown backend, or model load failure."""
