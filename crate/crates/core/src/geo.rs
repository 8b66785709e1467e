/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two `(lat, lon)` pairs in degrees.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let sin_dlat = ((lat2 - lat1) / 2.0).sin();
    let sin_dlon = ((lon2 - lon1) / 2.0).sin();
    let h = sin_dlat * sin_dlat + lat1.cos() * lat2.cos() * sin_dlon * sin_dlon;
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Moves `origin` by `east_m` / `north_m` meters using a local flat-earth
/// approximation. Good to well under a centimeter over a few kilometers.
pub fn offset(origin: (f64, f64), east_m: f64, north_m: f64) -> (f64, f64) {
    let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (east_m / (EARTH_RADIUS_M * origin.0.to_radians().cos())).to_degrees();
    (origin.0 + dlat, origin.1 + dlon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: chord length between unit vectors.
    fn chord_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
        let v = |p: (f64, f64)| {
            let (lat, lon) = (p.0.to_radians(), p.1.to_radians());
            [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
        };
        let (u, w) = (v(a), v(b));
        let chord = ((u[0] - w[0]).powi(2) + (u[1] - w[1]).powi(2) + (u[2] - w[2]).powi(2)).sqrt();
        2.0 * EARTH_RADIUS_M * (chord / 2.0).asin()
    }

    #[test]
    fn zero_for_same_point() {
        let p = (28.6139, 77.2090);
        assert_eq!(haversine_m(p, p), 0.0);
    }

    #[test]
    fn matches_chord_oracle() {
        let a = (28.6139, 77.2090);
        let b = (28.6139, 77.2190);
        let got = haversine_m(a, b);
        let want = chord_distance(a, b);
        assert!((got - want).abs() / want < 1e-3, "{got} vs {want}");
        // About 976 m of longitude at Delhi's latitude.
        assert!((got - 975.9).abs() < 1.0, "{got}");
    }

    #[test]
    fn offset_round_trips_distance() {
        let o = (28.6, 77.2);
        let p = offset(o, 300.0, 400.0);
        assert!((haversine_m(o, p) - 500.0).abs() < 0.01);
    }

    fn coord() -> impl Strategy<Value = (f64, f64)> {
        (-89.0f64..89.0, -179.0f64..179.0)
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(a in coord(), b in coord()) {
            let d = haversine_m(a, b);
            prop_assert!(d >= 0.0);
            prop_assert!((d - haversine_m(b, a)).abs() < 1e-6);
        }

        #[test]
        fn triangle_inequality(a in coord(), b in coord(), c in coord()) {
            let ab = haversine_m(a, b);
            let bc = haversine_m(b, c);
            let ac = haversine_m(a, c);
            prop_assert!(ac <= ab + bc + 1e-6);
        }
    }
}
