//! Distributionally robust model predictive control for collision avoidance
//! with randomly moving obstacles.
//!
//! An obstacle's motion between control stages is a random translation whose
//! distribution is known only through a handful of samples. Plans are required
//! to keep the conditional value-at-risk (CVaR) of the safety loss below a
//! tolerance for *every* distribution in a Wasserstein ball around the
//! empirical distribution, which yields decisions that stay safe when the
//! sample estimate is off.
//!
//! The pipeline:
//!
//! * [`geometry`] — polytopic obstacles, safe regions, closed-form safety loss;
//! * [`uncertainty`] — sample sets, empirical CVaR, Wasserstein radius
//!   selection, and a discrete transport oracle used for testing;
//! * [`models`] — vehicle dynamics (affine, car-like, quadrotor),
//!   discretization and linearization;
//! * [`reformulate`] — assembly of the finite-dimensional program obtained by
//!   Kantorovich duality, plus its McCormick relaxation;
//! * [`qp`] — a dense/block-structured primal-dual interior-point solver for
//!   the convex subproblems;
//! * [`nlp`] — an SQP local solver for the bilinear (and, for the car,
//!   nonlinear-dynamics) program;
//! * [`sbb`] — spatial branch-and-bound for an epsilon-global optimum in the
//!   affine case;
//! * [`planner`] — RRT* reference planning and time parameterization;
//! * [`control_loop`] — receding-horizon execution against moving obstacles;
//! * [`eval`] — out-of-sample risk, reliability and sweep harness;
//! * [`scenario`] — JSON scenario files;
//! * [`report`] — CSV/JSON/SVG exporters.

pub mod control_loop;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod models;
pub mod nlp;
pub mod planner;
pub mod qp;
pub mod reformulate;
pub mod report;
pub mod sbb;
pub mod scenario;
pub mod uncertainty;

pub use error::{Error, Result};
