"""trifvm: cell-centered finite volumes on triangles, partitioned and timed."""

__version__ = "0.1.0"
