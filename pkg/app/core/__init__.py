"""Core model, optimizer and EM engine."""
