"""copa: part-level constraint planning for robot manipulation."""
__version__ = "0.1.0"
