//! Shared fixtures for the benchmarks: the two-class reference intersection.

use sigfree_core::analytics::ServiceParams;
use sigfree_core::{CrossingTimeDist, DemandProfile, HeadwayMatrix, IntersectionSpec};

pub fn theta() -> HeadwayMatrix {
    HeadwayMatrix::new([[0.5, 1.0], [1.0, 0.5]]).expect("valid headways")
}

/// Two-point crossing time with mean 0.5 s and variance 0.1 s².
pub fn crossing_time() -> CrossingTimeDist {
    CrossingTimeDist::two_point(0.5, 0.1).expect("valid crossing time")
}

pub fn params() -> ServiceParams {
    ServiceParams::from_dist(theta(), &crossing_time()).expect("valid service parameters")
}

pub fn spec(lambda: [f64; 2]) -> IntersectionSpec {
    IntersectionSpec::new(theta(), crossing_time(), DemandProfile::new(lambda).expect("valid demand"))
        .expect("valid intersection")
}
