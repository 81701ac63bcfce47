"""certsmooth tests."""
