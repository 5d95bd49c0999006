"""Async tool implementations behind the MCP server and the CLI."""
