"""Readers and writers for curve files and run manifests."""
