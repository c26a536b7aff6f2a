"""Unit tests for probe-core."""
