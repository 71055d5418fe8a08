"""Tests for the ndtensor package."""
