"""Test suite for probe-core."""
