"""Data models for the MAAE toolkit."""
