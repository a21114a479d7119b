// Intentionally empty: Tensor is header-only.
