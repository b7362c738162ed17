//! Concrete designs, graphs, exposure maps, outcome models and predictors.

pub mod closed_form;
pub mod design;
pub mod exposure;
pub mod graph;
pub mod outcome;
pub mod predictor;

pub use closed_form::{analytic_law, closed_form_effect, closed_form_ybar, AnalyticLaw};
pub use design::Design;
pub use exposure::ExposureMap;
pub use graph::{GraphSpec, InterferenceGraph};
pub use outcome::OutcomeModel;
pub use predictor::{make_predictor, Predictor, PredictorSpec, StochasticPredictor};
