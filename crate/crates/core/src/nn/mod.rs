//! A small differentiable network engine: layers, forward and backward
//! passes, binary cross-entropy and plain SGD.

pub mod gradcheck;
pub mod io;
pub mod layer;
pub mod loss;
pub mod model;
pub mod schedule;

pub use gradcheck::{central_difference, finite_difference_grads};
pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use layer::{ActShape, Layer, LayerKind};
pub use loss::{bce_loss, bce_mean, BCE_EPS};
pub use model::{ForwardCache, Gradients, InputNorm, LayeredModel};
pub use schedule::SgdSchedule;

pub fn sigmoid(x: f64) -> f64 {
    model::sigmoid_scalar(x)
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    (p / (1.0 - p)).ln()
}
