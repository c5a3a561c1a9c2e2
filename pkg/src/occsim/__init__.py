"""Dense, chunked and overlapped-chunked network codes over line networks."""
