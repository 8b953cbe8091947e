"""Covariate-adjusted z-scoring of MRI features against a CN reference.

Per feature: least-squares fit of value ~ 1 + age + sex + TIV on CN rows,
then z = (predicted - observed) / SD(CN residuals). The sign convention is
atrophy-positive: values below expectation get positive z.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .atlas import MRI_FEATURES
from .errors import (DegenerateResidualError, InsufficientReferenceError,
                     InvalidValueError, SingularDesignError)
from .features import FeatureMatrix

MIN_CN_ROWS = 5


@dataclass(frozen=True)
class Covariates:
    age: float
    sex_code: int  # M -> 0, F -> 1
    tiv: float

    def __post_init__(self):
        if self.sex_code not in (0, 1):
            raise InvalidValueError(f"sex_code must be 0 or 1: {self.sex_code}")
        if self.tiv <= 0:
            raise InvalidValueError(f"tiv must be positive: {self.tiv}")


@dataclass(frozen=True)
class GlmModel:
    feature_name: str
    alpha: float
    beta_age: float
    beta_sex: float
    beta_tiv: float
    resid_sd: float
    n_cn: int


def _design(covs: np.ndarray) -> np.ndarray:
    n = covs.shape[0]
    return np.column_stack([np.ones(n), covs])


def covariate_array(covs: Sequence[Covariates]) -> np.ndarray:
    return np.array([[c.age, c.sex_code, c.tiv] for c in covs], dtype=float)


def fit_glm(cn_values: np.ndarray, cn_covs: np.ndarray,
            feature_name: str = "") -> GlmModel:
    """Least-squares fit on CN rows via orthogonal decomposition (SVD).

    cn_covs is (n, 3): age, sex code, TIV. Requires >= 5 rows, a full-rank
    design, and nondegenerate residual spread.
    """
    y = np.asarray(cn_values, dtype=float)
    covs = np.asarray(cn_covs, dtype=float)
    if y.ndim != 1 or covs.shape != (y.size, 3):
        raise InvalidValueError("cn_values must be (n,), cn_covs (n, 3)")
    n = y.size
    if n < MIN_CN_ROWS:
        raise InsufficientReferenceError(
            f"{feature_name or 'feature'}: {n} CN rows, need >= {MIN_CN_ROWS}")

    X = _design(covs)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 4:
        raise SingularDesignError(
            f"{feature_name or 'feature'}: design matrix rank {rank} < 4")
    resid = y - X @ coef
    resid_sd = float(np.std(resid, ddof=1))
    # A constant feature leaves rounding noise instead of an exact zero SD,
    # so check the spread of the raw values as well.
    if resid_sd <= 0.0 or float(np.ptp(y)) == 0.0:
        raise DegenerateResidualError(
            f"{feature_name or 'feature'}: zero residual SD, z-scores undefined")
    return GlmModel(
        feature_name=feature_name,
        alpha=float(coef[0]),
        beta_age=float(coef[1]),
        beta_sex=float(coef[2]),
        beta_tiv=float(coef[3]),
        resid_sd=resid_sd,
        n_cn=n,
    )


def predict(model: GlmModel, c: Covariates) -> float:
    return (model.alpha + c.age * model.beta_age + c.sex_code * model.beta_sex
            + c.tiv * model.beta_tiv)


def zscore(model: GlmModel, observed: float, c: Covariates) -> float:
    return (predict(model, c) - observed) / model.resid_sd


def _predict_rows(model: GlmModel, covs: np.ndarray) -> np.ndarray:
    return (model.alpha + covs[:, 0] * model.beta_age
            + covs[:, 1] * model.beta_sex + covs[:, 2] * model.beta_tiv)


def normalize_matrix(m: FeatureMatrix, cn_row_mask: np.ndarray,
                     covs: np.ndarray, sign: str = "atrophy",
                     ) -> tuple[FeatureMatrix, dict[str, GlmModel]]:
    """Replace every MRI column with its z-score column; others untouched.

    cn_row_mask flags the reference rows; covs is the (n, 3) covariate grid
    for all rows. sign="conventional" flips to observed-minus-predicted.
    Missing cells stay missing. Returns the new matrix and per-column models.
    """
    if sign not in ("atrophy", "conventional"):
        raise InvalidValueError(f"sign must be atrophy or conventional: {sign!r}")
    cn_row_mask = np.asarray(cn_row_mask, dtype=bool)
    covs = np.asarray(covs, dtype=float)
    if cn_row_mask.shape != (m.n_rows,) or covs.shape != (m.n_rows, 3):
        raise InvalidValueError("cn_row_mask/covs shapes do not match matrix rows")
    if cn_row_mask.sum() < MIN_CN_ROWS:
        raise InsufficientReferenceError(
            f"CN mask selects {int(cn_row_mask.sum())} rows, need >= {MIN_CN_ROWS}")

    mri_set = frozenset(MRI_FEATURES)
    values = m.values.copy()
    models: dict[str, GlmModel] = {}
    flip = -1.0 if sign == "conventional" else 1.0
    for j, name in enumerate(m.column_names):
        if name not in mri_set:
            continue
        col = m.values[:, j]
        observed_cn = cn_row_mask & ~m.missing_mask[:, j]
        model = fit_glm(col[observed_cn], covs[observed_cn], feature_name=name)
        models[name] = model
        predicted = _predict_rows(model, covs)
        with np.errstate(invalid="ignore"):
            values[:, j] = flip * (predicted - col) / model.resid_sd
    return FeatureMatrix(
        column_names=m.column_names,
        values=values,
        missing_mask=m.missing_mask.copy(),
        row_ids=m.row_ids,
    ), models


def model_to_dict(model: GlmModel) -> dict:
    return {
        "feature_name": model.feature_name,
        "alpha": model.alpha,
        "beta_age": model.beta_age,
        "beta_sex": model.beta_sex,
        "beta_tiv": model.beta_tiv,
        "resid_sd": model.resid_sd,
        "n_cn": model.n_cn,
    }


def model_from_dict(d: dict) -> GlmModel:
    return GlmModel(**d)
