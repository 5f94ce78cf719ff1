"""Multi-label pixelwise classification of RGBD rasters.

CNN likelihoods over multi-scale composites, SVM label fusion, MRF refinement
by alpha-expansion, evaluation and prism reconstruction.
"""

__version__ = "0.1.0"
