"""Matrix file formats, ratings loaders and synthetic data."""
