"""partgen: part-aware sketch-to-3D shape generation.

Shapes are sets of 3D Gaussian parts decoded to an implicit occupancy
field; a latent diffusion model over aligned part-latents generates them,
optionally conditioned on part-disentangled sketch encodings.
"""

__version__ = "0.1.0"
