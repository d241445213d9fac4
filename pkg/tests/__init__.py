"""Test suite for the MAAE toolkit."""
