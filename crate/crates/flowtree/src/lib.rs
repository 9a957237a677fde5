//! Tree-indexed series expansions for polynomial ODE flows.
//!
//! The crate builds the solution of `dx/dt = P(x)` as a sum over planar
//! rooted trees weighted by reciprocal tree factorials, and layers on top of
//! that: convergence-radius estimates, linearizing changes of coordinates
//! near a fixed point, resonance detection with exact rational arithmetic,
//! and quadrature oracles for cross-checking the combinatorial results.

pub mod diagram;
pub mod error;
pub mod field;
pub mod flow;
pub mod linearize;
pub mod numeric;
pub mod resonance;
pub mod scalar;
pub mod verify;

pub use diagram::{
    enumerate_diagrams, enumerate_skeletons, enumerate_skeletons_up_to, evaluate_diagram,
    Diagram, DiagramPartition, Skeleton,
};
pub use error::{FlowError, Result};
pub use field::{
    bracket, contract_at, parse_field, serialize_field, star_product, PolyTerm, VectorField,
};
pub use flow::{
    build_series, discrete_expansion, evaluate_expansion, evaluate_series, iterate_map,
    observe_blowup, radius_estimate, scalar_exact, sum_coefficients,
    sum_coefficients_uncorrected, trajectory_csv, EvolutionSeries, OrderGroup, RadiusReport,
};
pub use linearize::{
    deformed_initial_conditions, evolve_near_fixed_point, first_order_term, inverse_series,
    linearizing_map, nonres_coefficient, perturbation_radius_bound, small_denominator_scan,
    DiophantineParams, LinearizationSeries, MapDirection, PolyMap, RESONANCE_RTOL,
};
pub use numeric::{IntegratorConfig, IntegratorMethod, SecularFit, Trajectory};
pub use resonance::{
    detect_secular_term, find_resonance_diagrams, find_resonance_relations,
    irreducible_decomposition, necessary_condition, reference_catalog,
    resonance_line_multiplier, resonant_generator_catalog, vertex_integral_tpower, CatalogRow,
    CatalogSet, GeneratorMatrix, ResonanceRelation, SignConvention, TPowerIntegral,
    DEFAULT_CATALOG_ORDER, DEFAULT_MAX_ORDER,
};
pub use scalar::{Scalar, C64, CQ, Q};
pub use verify::{run_all, run_all_seeded, CriterionResult};
