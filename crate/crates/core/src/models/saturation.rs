use super::genrou::GenrouParams;

/// Scaled-quadratic open-circuit saturation function fitted through the two
/// defining points `S(1.0) = s_1_0` and `S(1.2) = s_1_2`:
///
/// `S(x) = B (x - A)^2 / x` for `x > A`, zero below the knee `A`.
///
/// Total on non-negative flux magnitudes: degenerate factor pairs fall back
/// to an unsaturated or single-point fit instead of failing.
pub fn saturation(flux_magnitude: f64, params: &GenrouParams) -> f64 {
    let (a, b) = saturation_coeffs(params.s_1_0, params.s_1_2);
    eval_scaled_quadratic(flux_magnitude, a, b)
}

pub(crate) fn eval_scaled_quadratic(x: f64, a: f64, b: f64) -> f64 {
    if x <= a || x <= 0.0 || b == 0.0 {
        return 0.0;
    }
    let d = x - a;
    b * d * d / x
}

/// Knee `A` and scale `B` of the scaled-quadratic fit.
pub(crate) fn saturation_coeffs(s_1_0: f64, s_1_2: f64) -> (f64, f64) {
    if s_1_0 <= 0.0 && s_1_2 <= 0.0 {
        return (0.0, 0.0);
    }
    if s_1_0 <= 0.0 {
        // knee at the first defining point; fit B to the second
        let a = 1.0;
        let b = 1.2 * s_1_2 / ((1.2 - a) * (1.2 - a));
        return (a, b);
    }
    let c = (1.2 * s_1_2 / s_1_0).sqrt();
    if (c - 1.0).abs() < 1e-9 {
        // both points on the same ray; single-coefficient fit through S(1.0)
        return (0.0, s_1_0);
    }
    let a = (1.2 - c) / (1.0 - c);
    let b = s_1_0 / ((1.0 - a) * (1.0 - a));
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params_with(s10: f64, s12: f64) -> GenrouParams {
        let mut p = GenrouParams::example();
        p.s_1_0 = s10;
        p.s_1_2 = s12;
        p
    }

    #[test]
    fn unsaturated_machine_is_zero_everywhere() {
        let p = params_with(0.0, 0.0);
        for flux in [0.0, 0.5, 1.0, 1.2, 2.0] {
            assert_eq!(saturation(flux, &p), 0.0);
        }
    }

    #[test]
    fn defining_points_are_reproduced() {
        let p = params_with(0.1, 0.4);
        assert_relative_eq!(saturation(1.0, &p), 0.1, max_relative = 1e-12);
        assert_relative_eq!(saturation(1.2, &p), 0.4, max_relative = 1e-12);
    }

    /// Independent oracle: recover the knee by bisection on the ratio
    /// equation instead of the closed form, then evaluate the fit.
    fn oracle_scaled_quadratic(s10: f64, s12: f64, x: f64) -> f64 {
        let f = |a: f64| {
            let b = s10 / ((1.0 - a) * (1.0 - a));
            b * (1.2 - a) * (1.2 - a) / 1.2 - s12
        };
        let (mut lo, mut hi) = (-10.0, 1.0 - 1e-12);
        assert!(f(lo) < 0.0 && f(hi) > 0.0, "oracle bracket invalid");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        let b = s10 / ((1.0 - a) * (1.0 - a));
        if x <= a {
            0.0
        } else {
            b * (x - a) * (x - a) / x
        }
    }

    #[test]
    fn matches_two_point_fit_oracle() {
        let p = params_with(0.1, 0.4);
        let expected = oracle_scaled_quadratic(0.1, 0.4, 1.1);
        assert_relative_eq!(saturation(1.1, &p), expected, max_relative = 1e-9);
        // a second, gentler curve
        let p = params_with(0.05, 0.2);
        for flux in [0.9, 1.0, 1.05, 1.15, 1.3] {
            let expected = oracle_scaled_quadratic(0.05, 0.2, flux);
            assert_relative_eq!(saturation(flux, &p), expected, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn monotone_above_knee() {
        let p = params_with(0.1, 0.4);
        let mut prev = 0.0;
        let mut x = 0.85; // just above the knee
        while x < 2.0 {
            let s = saturation(x, &p);
            assert!(s >= prev, "saturation decreased at flux {x}");
            prev = s;
            x += 0.01;
        }
    }

    #[test]
    fn degenerate_s10_zero_keeps_second_point() {
        let p = params_with(0.0, 0.3);
        assert_eq!(saturation(1.0, &p), 0.0);
        assert_relative_eq!(saturation(1.2, &p), 0.3, max_relative = 1e-12);
    }
}
