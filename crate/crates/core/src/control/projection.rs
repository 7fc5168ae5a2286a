//! Box projection keeping positivity-critical estimates inside `[lo, hi]`.

/// Componentwise clamp into `[lo, hi]`.
pub fn project(value: &mut [f64], lo: f64, hi: f64) {
    for v in value.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Zero the components of `rate` that would push an entry sitting on the
/// boundary further out. Inward rates are left alone.
pub fn project_rate(value: &[f64], rate: &mut [f64], lo: f64, hi: f64) {
    for (v, r) in value.iter().zip(rate.iter_mut()) {
        if (*v <= lo && *r < 0.0) || (*v >= hi && *r > 0.0) {
            *r = 0.0;
        }
    }
}

/// Limit `|rate|` componentwise.
pub fn limit_rate(rate: &mut [f64], max_abs: f64) {
    for r in rate.iter_mut() {
        *r = r.clamp(-max_abs, max_abs);
    }
}
