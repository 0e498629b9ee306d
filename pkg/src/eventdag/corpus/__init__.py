"""Readers and writers for standoff corpora, relation files, embeddings and synthetic data."""
