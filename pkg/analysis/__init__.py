"""Closed-form references, residual checks and verification suites."""
