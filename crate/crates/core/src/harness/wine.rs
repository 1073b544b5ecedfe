//! The bundled wine recognition data (178 wines, 13 chemical descriptors,
//! three cultivars) and the predictor matrices used to impute it.

use crate::error::Result;
use crate::impute_fcs::PredictorMatrix;
use crate::mechanisms::Dataset;

use super::io::{read_dataset, read_predictor_matrix};

const WINE_CSV: &str = include_str!("../../data/wine.csv");
const PREDICTORS_MCAR: &str = include_str!("../../data/wine_predictors_mcar.csv");
const PREDICTORS_MAR: &str = include_str!("../../data/wine_predictors_mar.csv");

/// Wine data with the cultivar as reference labels.
pub fn wine() -> Result<Dataset> {
    read_dataset(WINE_CSV.as_bytes(), "NA", Some("Cultivar"))
}

/// Predictor matrix selected for imputing MCAR-amputed wine data.
pub fn wine_predictors_mcar() -> Result<PredictorMatrix> {
    read_predictor_matrix(PREDICTORS_MCAR.as_bytes()).map(|(m, _)| m)
}

/// Predictor matrix selected for imputing MAR-amputed wine data.
pub fn wine_predictors_mar() -> Result<PredictorMatrix> {
    read_predictor_matrix(PREDICTORS_MAR.as_bytes()).map(|(m, _)| m)
}
