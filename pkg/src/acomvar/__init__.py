"""Common-variance and approximate common-variance (A-ComVar) factorial designs."""
