"""Seeded experiment drivers, configuration, persistence and the command line."""
