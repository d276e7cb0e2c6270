//! Multi-objective placement of permeable-surface zones in an urban
//! catchment: a binary NSGA-II engine, a lifecycle cost model, a raster
//! flood simulator, a building exposure model and an enumeration oracle.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod cost;
pub mod exposure;
pub mod flood;
pub mod genome;
pub mod objectives;
pub mod optimizer;
pub mod raster;
pub mod repository;
pub mod scalar;
pub mod scenario;
pub mod validation;

pub use cost::{CostParams, ZoneCostTable};
pub use exposure::{Aggregation, BuildingSet, ExposureCriteria};
pub use flood::{FloodModel, FloodResult, RainEvent, RasterGrid, SimParams, Simulator};
pub use genome::Genome;
pub use objectives::{Evaluator, ObjectiveVector};
pub use optimizer::{run_optimization, GAConfig, OptimizationResult};
pub use repository::SolutionRepository;
pub use scalar::Scalar;
pub use scenario::{CatchmentScenario, ScenarioEvaluator, SyntheticSpec};
pub use validation::{enumerate_all, ParetoFront};

pub type Objectives = ObjectiveVector<f64>;
pub type Scenario = CatchmentScenario<f64>;
pub type Front = ParetoFront<f64>;
pub type Repository = SolutionRepository<f64>;
pub type Flood = FloodResult<f64>;
pub type Grid = RasterGrid<f64>;
pub type Rain = RainEvent<f64>;
pub type Costs = ZoneCostTable<f64>;
