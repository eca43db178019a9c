"""Indexing, planning, prompting and evaluation services."""
