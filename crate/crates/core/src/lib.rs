//! Topological entropy and pressure of non-autonomous iterated function
//! systems, estimated from separated, spanning and cover counts on grids.

pub mod entropy;
pub mod error;
pub mod exact;
pub mod fit;
pub mod index;
pub mod maps;
pub mod output;
pub mod pressure;
pub mod properties;
pub mod spaces;
pub mod system;

mod bigdec;

pub use entropy::{
    asymptotic_entropy, averaged_counts, entropy_estimate, entropy_point_probe, nonwandering_set,
    separated_count, spanning_count, CountOptions, CountRecord, EntropyEstimate, SpanningMode,
};
pub use error::{NaifsError, Result};
pub use maps::{MapRef, MapSpec};
pub use pressure::{averaged_pressure, pressure_estimate, Potential, PressureOptions, PressureRecord};
pub use properties::{expansivity_check, exactness_n, ExpansivityCertificate, SpecInstance};
pub use spaces::{Grid, Point, Space};
pub use system::{derive_seed, NaifsSchedule, ScheduleSpec, Tail, Word};
