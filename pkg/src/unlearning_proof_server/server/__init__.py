"""FastMCP server wiring."""
