"""Error hierarchy and artifact writers."""
