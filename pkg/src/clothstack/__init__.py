"""clothstack: multi-layer garment mesh processing.

Canonicalizes per-layer clothed-body meshes onto a shared rest pose,
removes inter-layer penetrations, refits each garment with a neural
unsigned distance field, extracts refined shells, and scores the result
with Chamfer distance, normal consistency, and the rendered
intersection ratio.
"""

__version__ = "0.1.0"
