"""Command dispatch from a resolved run configuration to the numerical packages."""
