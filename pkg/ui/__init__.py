"""Command-line interface for the MAAE toolkit."""
