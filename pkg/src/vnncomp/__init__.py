"""Harness for neural network verification competitions."""
