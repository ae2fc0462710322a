"""Rule-based compression of terminal output for coding agents."""
