"""Core numerics, model pieces and training for the MAAE toolkit."""
