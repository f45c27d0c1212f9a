"""Test suite for the noisestab library."""
