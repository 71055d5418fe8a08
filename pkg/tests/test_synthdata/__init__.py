"""Tests for the synthdata package."""
