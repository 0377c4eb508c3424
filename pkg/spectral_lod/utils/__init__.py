"""Miscellaneous utility functions, e.g. raster masks, offline dumps, thread pools."""
