"""Hierarchical context pruning for repository-level code completion."""
