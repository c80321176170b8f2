"""Federated learning simulation engine with server-side global and metric privacy."""
