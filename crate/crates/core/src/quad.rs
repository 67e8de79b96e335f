//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 15-point Kronrod rule with embedded 7-point Gauss rule drives a
//! globally adaptive bisection scheme (worst-interval-first). Integrands on
//! the open unit interval get the substitution u = v^2 near 0 and
//! 1 - u = w^2 near 1 so that densities diverging like u^{-a} (a < 1) at
//! the endpoints stay integrable after transformation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

// QUADPACK QK15 abscissae (positive half) and weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated absolute error bound.
    pub error: f64,
    /// Whether the requested tolerance was reached within budget.
    pub converged: bool,
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err > scaled {
            scaled = min_err;
        }
    }
    scaled
}

/// One application of the 15-point Kronrod rule on [a, b].
fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    let mut result_gauss = fc * WG[3];
    let mut result_kronrod = fc * WGK[7];
    let mut res_abs = result_kronrod.abs();

    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    for (i, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[i] = f1;
        fv[14 - i] = f2;
        result_kronrod += WGK[i] * (f1 + f2);
        res_abs += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            result_gauss += WG[i / 2] * (f1 + f2);
        }
    }

    let mean = result_kronrod * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for (i, &v) in fv.iter().enumerate().take(7) {
        res_asc += WGK[i] * ((v - mean).abs() + (fv[14 - i] - mean).abs());
    }

    let value = result_kronrod * half;
    let err = rescale_error(
        (result_kronrod - result_gauss) * half,
        res_abs * half.abs(),
        res_asc * half.abs(),
    );
    (value, err)
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

const MAX_SEGMENTS: usize = 4096;

/// Integrate `f` over the finite interval [a, b].
///
/// Refines the interval with the largest error estimate until the total
/// estimated error falls below `max(abs_tol, rel_tol * |value|)` or the
/// segment budget is exhausted.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, error: 0.0, converged: true };
    }
    let (v, e) = kronrod15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total_value = v;
    let mut total_error = e;

    while total_error > abs_tol.max(rel_tol * total_value.abs()) && heap.len() < MAX_SEGMENTS {
        let worst = heap.pop().expect("heap nonempty");
        // An interval at floating point resolution cannot be refined further.
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            total_error = heap.iter().map(|s| s.error).sum::<f64>() + worst.error;
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        total_value += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }

    QuadResult {
        value: total_value,
        error: total_error,
        converged: total_error <= abs_tol.max(rel_tol * total_value.abs()),
    }
}

/// Integrate over the open unit interval (0, 1) with endpoint substitutions
/// u = v^2 (near 0) and u = 1 - w^2 (near 1).
///
/// The integrand receives `(u, 1 - u)` with the complement computed exactly
/// on the upper half, so factors like `(1-u)^r` stay accurate at u near 1.
pub fn integrate_unit<F: Fn(f64, f64) -> f64>(f: F, abs_tol: f64, rel_tol: f64) -> QuadResult {
    let split = std::f64::consts::FRAC_1_SQRT_2;
    let lower = integrate(
        |v| {
            let u = v * v;
            2.0 * v * f(u, 1.0 - u)
        },
        0.0,
        split,
        0.5 * abs_tol,
        rel_tol,
    );
    let upper = integrate(
        |w| {
            let om = w * w;
            2.0 * w * f(1.0 - om, om)
        },
        0.0,
        split,
        0.5 * abs_tol,
        rel_tol,
    );
    QuadResult {
        value: lower.value + upper.value,
        error: lower.error + upper.error,
        converged: lower.converged && upper.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 1e-12);
        assert!((r.value - 8.0).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn oscillatory_integrand() {
        let r = integrate(|x| (10.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-12, 1e-12);
        // integral of sin(10x) over [0, pi] = (1 - cos(10 pi)) / 10 = 0
        assert!(r.value.abs() < 1e-10);
    }

    #[test]
    fn endpoint_singularity_inverse_sqrt() {
        // int_0^1 u^{-1/2} du = 2, singular at 0.
        let r = integrate_unit(|u, _| u.powf(-0.5), 1e-12, 1e-12);
        assert!((r.value - 2.0).abs() < 1e-10, "got {}", r.value);
        assert!(r.converged);
    }

    #[test]
    fn singularities_at_both_ends() {
        // int_0^1 u^{-1/2} (1-u)^{-1/2} du = pi (arcsine law normalizer).
        let r = integrate_unit(|u, om| u.powf(-0.5) * om.powf(-0.5), 1e-12, 1e-12);
        assert!((r.value - std::f64::consts::PI).abs() < 1e-9, "got {}", r.value);
    }

    #[test]
    fn beta_moment() {
        // int_0^1 u^2 (1-u)^3 du = B(3, 4) = 1/60.
        let r = integrate_unit(|u, om| u * u * om.powi(3), 1e-14, 1e-13);
        assert!((r.value - 1.0 / 60.0).abs() < 1e-13);
    }
}
