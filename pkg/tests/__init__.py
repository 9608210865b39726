"""Test suite for pywardrop package."""
