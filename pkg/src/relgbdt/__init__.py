"""Gradient boosted trees over multi-table relational data."""
