//! Reference solutions: finite differences on rectangles and manufactured cases on every domain.

mod banded;
mod compare;
mod fd;
mod manufactured;

pub use banded::{BandLu, BandMatrix};
pub use compare::{compare_fields, compare_values, comparison_cloud, FieldMetrics, COMPARISON_POINTS, COMPARISON_SEED};
pub use fd::{fd_operator, fd_solve_rectangle, fd_solve_rectangle_with, fd_solve_with_estimate, GridSolution, RichardsonEstimate};
pub use manufactured::{
    make_manufactured, ManufacturedCase, ManufacturedDescriptor, ManufacturedSolution, PROJECTION_ORDER, PROJECTION_TOLERANCE,
};

use crate::trainer::ReferenceSamples;

impl GridSolution {
    /// Interior nodes as reference samples for training diagnostics.
    pub fn reference_samples(&self) -> ReferenceSamples {
        let (points, values) = self.interior_nodes();
        ReferenceSamples { points, values }
    }
}
