"""File interchange and the command-line interface."""
