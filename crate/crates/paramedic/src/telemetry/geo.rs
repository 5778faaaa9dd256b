//! Ingestion shim for replaying external geodetic logs: converts lat/lon/alt
//! to the local ENU frame via a small-area equirectangular projection. Good
//! to well under a meter at the mission scales this harness works at.

use serde::{Deserialize, Serialize};

use crate::{Scalar, Vec3};

const EARTH_RADIUS_M: Scalar = 6_371_000.0;

/// A geodetic fix: degrees latitude/longitude, meters above ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: Scalar,
    pub lon_deg: Scalar,
    pub alt_m: Scalar,
}

/// East-north-up offset of `point` from `origin`, meters.
pub fn geodetic_to_enu(origin: GeoPoint, point: GeoPoint) -> Vec3 {
    let lat0 = origin.lat_deg.to_radians();
    let d_lat = (point.lat_deg - origin.lat_deg).to_radians();
    let d_lon = (point.lon_deg - origin.lon_deg).to_radians();
    Vec3::new(
        d_lon * lat0.cos() * EARTH_RADIUS_M,
        d_lat * EARTH_RADIUS_M,
        point.alt_m - origin.alt_m,
    )
}
