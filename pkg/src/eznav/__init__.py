"""eznav: tile-pyramid saliency perception and visibility-aware frontier navigation.

Library layout:
  pyramid     aligned multi-scale tile grids and bottom-up saliency fusion
  geometry    pinhole camera model, ray back-projection, world directions
  visibility  per-level score statistics and the visibility verdict
  memory      keyframe window, weighted direction fusion, re-identification
  mapping     occupancy grid, frontier detection, grid path planning
  navigator   the closed-loop mode machine (track / fused / search / fallback)
  world       deterministic 2.5-D outdoor world and synthetic tile scorer
  pipeline    score grids -> fused pyramid -> verdict -> world direction
  episode     episode configs, the simulation loop, trajectory logging
  evaluation  penalized angular error, RSR/RPL/SR, benchmark drivers
  scoregrid_io  the score-grid file format shared with external scorers
  plots       figure rendering for episode and benchmark reports
  cli         operator entry point (perceive / episode / bench)
"""

__version__ = "0.1.0"
