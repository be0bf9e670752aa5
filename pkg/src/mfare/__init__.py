"""Multi-factor dependency-weighted attention for relation extraction."""
