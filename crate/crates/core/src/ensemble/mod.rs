//! Ensembles of fine-tuned members: admission, minimum-loss selection,
//! weighted combination and weight calibration.

pub mod manifest;
pub mod model;
pub mod weights;

pub use manifest::{load_ensemble, save_ensemble, EnsembleManifest, ManifestMember, ENSEMBLE_FORMAT_VERSION};
pub use model::{
    argmin, build_ensemble, ensemble_history, Admission, EnsembleMode, EnsembleModel, MemberRecord, Rejection,
};
pub use weights::{
    calibrate_from_logits, calibration_objective, classify, combine, grid_divisions, reciprocal_weights, simplex_grid,
    Operand, LOSS_FLOOR,
};
