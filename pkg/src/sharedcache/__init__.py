"""Coded caching with shared caches: placement, delivery, online updates, bounds and error correction."""
