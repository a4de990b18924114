//! Differentially private similarity and distance queries in the
//! function release model.
//!
//! A dataset is summarised once into a noisy structure; the structure can
//! then answer any number of queries without further privacy loss:
//!
//! * [`onedim`]: `sum_x |x - y|` and `sum_x |x - y|^p` on `[0, R]`,
//! * [`highdim`]: l1, l_p^p and l2 distance sums in `d` dimensions,
//! * [`l2sq`]: squared Euclidean distance sums,
//! * [`kde`] and [`smooth`]: kernel density queries,
//! * [`classify`]: a private nearest-centroid classifier,
//! * [`oracle`]: exact answers for testing,
//! * [`sketch_file`]: a portable binary format for all of the above.
//!
//! Every structure is generic over the scalar (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod classify;
pub mod dataset;
pub mod error;
pub mod highdim;
pub mod kde;
pub mod kernel;
pub mod l2sq;
pub mod onedim;
pub mod oracle;
pub mod privacy;
pub mod projection;
pub mod scalar;
pub mod sketch_file;
pub mod smooth;

pub use classify::{fit_classifier, ClassifierConfig};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use highdim::{build_l1, build_l2};
pub use kde::{build_kde, KdeConfig};
pub use kernel::Kernel;
pub use l2sq::build_l2sq;
pub use onedim::{build_tree, Noise};
pub use oracle::{error_report, exact_distance_sum, exact_kde, DistanceFn, ErrorReport};
pub use privacy::{DomainPromise, PrivacyBudget, RngStream};
pub use projection::{ProjectionKind, ProjectionSpec};
pub use scalar::Scalar;
pub use sketch_file::{FunctionId, Sketch};
pub use smooth::{build_smooth_kde, exp_sum_approx, SmoothConfig};

pub type Dataset64 = dataset::Dataset<f64>;
pub type NoisyTree64 = onedim::NoisyTree<f64>;
pub type L1Structure64 = highdim::L1Structure<f64>;
pub type L2Structure64 = highdim::L2Structure<f64>;
pub type NoisyMoments64 = l2sq::NoisyMoments<f64>;
pub type DpKdeSketch64 = kde::DpKdeSketch<f64>;
pub type SmoothKdeSketch64 = smooth::SmoothKdeSketch<f64>;
pub type DpClassifier64 = classify::DpClassifier<f64>;
pub type Sketch64 = sketch_file::Sketch<f64>;

pub type Dataset32 = dataset::Dataset<f32>;
pub type NoisyTree32 = onedim::NoisyTree<f32>;
pub type Sketch32 = sketch_file::Sketch<f32>;
