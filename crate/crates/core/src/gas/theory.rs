//! Closed-form amplitude-amplification quantities.

/// Probability of measuring a marked state after `l` rotations when `ns` of
/// `nt` states are marked.
pub fn success_probability(ns: u64, nt: u64, l: u64) -> f64 {
    if nt == 0 {
        return 0.0;
    }
    let theta = (ns as f64 / nt as f64).sqrt().asin();
    ((2 * l + 1) as f64 * theta).sin().powi(2)
}

/// `floor((pi/4) sqrt(nt/ns))`.
pub fn l_opt(ns: u64, nt: u64) -> u64 {
    assert!(ns >= 1, "l_opt needs at least one marked state");
    (std::f64::consts::FRAC_PI_4 * (nt as f64 / ns as f64).sqrt()).floor() as u64
}

/// Smallest `I` with `(1 - P_success(l_min))^I <= 1e-3`.
pub fn restart_iterations(l_min: u64, nt: u64, ns: u64) -> u64 {
    let c = (1.0 - success_probability(ns, nt, l_min)).sqrt();
    if c < 1e-12 {
        return 1;
    }
    let bound = -3.0 / (2.0 * c.log10());
    // guard against a bound landing a hair above an integer
    (bound - 1e-9).ceil().max(1.0) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l_opt_values() {
        assert_eq!(l_opt(6, 256), 5);
        assert_eq!(l_opt(1, 4), 1);
        assert_eq!(l_opt(1, 256), 12);
    }

    #[test]
    fn success_probability_values() {
        assert!((success_probability(3, 8, 0) - 3.0 / 8.0).abs() < 1e-15);
        assert!((success_probability(8, 8, 7) - 1.0).abs() < 1e-12);
        let direct = (11.0 * (6.0f64 / 256.0).sqrt().asin()).sin().powi(2);
        assert!((success_probability(6, 256, 5) - direct).abs() < 1e-15);
        assert!((direct - 0.98570).abs() < 1e-5);
        assert!((success_probability(1, 4, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restart_iteration_values() {
        assert_eq!(restart_iterations(5, 256, 1), 14);
        assert_eq!(restart_iterations(0, 4, 1), 25);
        assert_eq!(restart_iterations(1, 4, 1), 1);
        assert_eq!(restart_iterations(0, 4, 4), 1);
    }

    #[test]
    fn restart_iterations_is_smallest() {
        for (l, nt, ns) in [(0, 16, 1), (2, 64, 3), (5, 256, 1), (3, 1024, 7)] {
            let i = restart_iterations(l, nt, ns);
            let fail = 1.0 - success_probability(ns, nt, l);
            assert!(fail.powi(i as i32) <= 1e-3 + 1e-15);
            assert!(i == 1 || fail.powi(i as i32 - 1) > 1e-3);
        }
    }
}
