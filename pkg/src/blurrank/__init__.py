"""Rank-supervised object-image blur assessment.

Learn a continuous sharpness score from pairwise rank labels alone,
optionally improved with a quadruplet ranking-consistency loss over
unlabeled images, plus the dataset-construction and SROCC evaluation
machinery around it.
"""

__version__ = "0.1.0"
