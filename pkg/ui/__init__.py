"""Terminal summaries rendered with rich."""
