"""atlasforest: diagnostic-group labeling, covariate-adjusted MRI z-scoring,
Random Forest classification, and Boruta brain-region selection for tabular
neuroimaging cohorts."""

__version__ = "0.1.0"
