"""Tests for the nn package."""
