"""File formats: series files, sidecars, threshold profiles, manifests and tables."""
