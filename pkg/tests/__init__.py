"""Test suite for pmgan."""
