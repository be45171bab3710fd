"""Boolean Matrix Factorization - Core package."""
