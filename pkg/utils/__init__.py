"""Utility functions for the MAAE toolkit."""
