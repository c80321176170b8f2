"""Command-line runner for the federated simulation engine."""
