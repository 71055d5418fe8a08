"""Test suite for segviz."""
