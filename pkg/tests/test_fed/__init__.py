"""Tests for the fed package."""
