//! Sections, inscribed ellipsoids, explicit barriers and growth probes.

mod ellipsoid;
mod growth;
mod section;
mod urbas;

pub use ellipsoid::{
    ellipsoid_barrier, geometric_tolerance, john_constant, john_ellipsoid, max_volume_inscribed, quadratic_section_ellipsoid, radius_estimate_check,
    radius_margin, Ellipsoid, EllipsoidBarrier, JohnEllipsoid, RadiusReport, SubsolutionFrame, JOHN_SLACK,
};
pub use section::{extract_section, Section};
pub use urbas::{
    barrier_placement, fit_urbas_barrier, urbas_barrier, young_constant, BarrierCase, BarrierKind, BarrierSpec,
    BarrierVerification, FittedBarrier, Inequality, Placement,
};
pub use growth::{
    critical_exponent, delta_integral, growth_probe, laplacian_power, linear_fit, sphere_area, GrowthOptions, GrowthReport,
    IntegralOptions,
};
