//! Special functions and quadrature used by the kernel and the `xi` law.

use crate::error::{Error, Result};

/// Relative size of the estimated series tail at which summation stops.
pub const SERIES_TOLERANCE: f64 = 1e-16;
/// Hard cap on the number of series terms.
pub const SERIES_MAX_TERMS: usize = 100_000;

/// Above this argument the series in `w` is replaced by the expansion
/// around `w = 1`.
pub(crate) const CONNECTION_THRESHOLD: f64 = 0.75;

/// Gamma function (Lanczos approximation).
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Gauss hypergeometric function `2F1(a, b; c; z)` for `z < 1`.
///
/// Negative arguments go through the Pfaff transformation
/// `2F1(a,b;c;z) = (1-z)^{-a} 2F1(a, c-b; c; z/(z-1))`, which lands in
/// `[0, 1)`. Arguments close to 1 after that use the connection formula
/// around `w = 1` unless `c - a - b` is (nearly) an integer.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if c <= 0.0 && c == c.floor() {
        return Err(Error::Domain(format!(
            "2F1 undefined for non-positive integer c = {c}"
        )));
    }
    if !(z < 1.0) || z.is_nan() {
        return Err(Error::Domain(format!("2F1 implemented for z < 1, got {z}")));
    }
    if z == 0.0 || a == 0.0 || b == 0.0 {
        return Ok(1.0);
    }
    if z < 0.0 {
        let w = z / (z - 1.0);
        let prefactor = (1.0 - z).powf(-a);
        return Ok(prefactor * hyp2f1_unit(a, c - b, c, w)?);
    }
    hyp2f1_unit(a, b, c, z)
}

/// `2F1` for `w` in `[0, 1)`.
fn hyp2f1_unit(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    if a == 0.0 || b == 0.0 || w == 0.0 {
        return Ok(1.0);
    }
    if w > CONNECTION_THRESHOLD {
        if let Some(coeffs) = Connection::new(a, b, c) {
            return coeffs.eval_complement(1.0 - w);
        }
    }
    series(a, b, c, w)
}

/// Direct hypergeometric series with a geometric tail estimate.
pub fn series(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        let ratio = (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * w;
        term *= ratio;
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        let r = ratio.abs();
        if r < 1.0 && term.abs() * r / (1.0 - r) <= SERIES_TOLERANCE * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Hypergeometric {
        terms: SERIES_MAX_TERMS,
        partial_sum: sum,
        last_term: term,
    })
}

/// Coefficients of
/// `2F1(a,b;c;w) = A 2F1(a,b;a+b-c+1;1-w) + (1-w)^{c-a-b} B 2F1(c-a,c-b;c-a-b+1;1-w)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Connection {
    a: f64,
    b: f64,
    c: f64,
    first: f64,
    second: f64,
}

impl Connection {
    pub(crate) fn new(a: f64, b: f64, c: f64) -> Option<Self> {
        let s = c - a - b;
        if (s - s.round()).abs() < 1e-3 {
            return None;
        }
        let is_pole = |x: f64| x <= 0.0 && x == x.floor();
        let gc = gamma(c);
        let first = if is_pole(c - a) || is_pole(c - b) {
            0.0
        } else {
            gc * gamma(s) / (gamma(c - a) * gamma(c - b))
        };
        let second = if is_pole(a) || is_pole(b) {
            0.0
        } else {
            gc * gamma(-s) / (gamma(a) * gamma(b))
        };
        (first.is_finite() && second.is_finite()).then_some(Self {
            a,
            b,
            c,
            first,
            second,
        })
    }

    /// Value at `w = 1 - v`.
    pub(crate) fn eval_complement(&self, v: f64) -> Result<f64> {
        let (a, b, c) = (self.a, self.b, self.c);
        let s = c - a - b;
        let mut out = 0.0;
        if self.first != 0.0 {
            out += self.first * series(a, b, 1.0 - s, v)?;
        }
        if self.second != 0.0 {
            out += self.second * v.powf(s) * series(c - a, c - b, 1.0 + s, v)?;
        }
        Ok(out)
    }
}

/// Integral of `f` over `[a, b]` by tanh-sinh quadrature, which tolerates
/// integrable endpoint singularities.
pub fn integrate_tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    integrate_tanh_sinh_gaps(|x, _, _| f(x), a, b, abs_tol)
}

const TANH_SINH_MAX_LEVEL: u32 = 12;
const TANH_SINH_T_MAX: f64 = 6.1;

/// Tanh-sinh quadrature where the integrand also receives the exact
/// distances `x - a` and `b - x`, so singular factors such as `(b - x)^p`
/// can be evaluated without cancellation next to the endpoints.
pub fn integrate_tanh_sinh_gaps<F>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64, f64, f64) -> f64,
{
    if b == a {
        return Ok(0.0);
    }
    if !(b > a) {
        return Err(Error::Domain(format!("empty interval [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let pi2 = std::f64::consts::FRAC_PI_2;
    // Sum of w(t) f(x(t)) over nodes t = k h for the given k.
    let node = |t: f64| -> f64 {
        let u = pi2 * t.sinh();
        let cu = u.cosh();
        let weight = pi2 * t.cosh() / (cu * cu);
        // distance from the nearer endpoint: half (1 - tanh|u|)
        let gap = half * (-u.abs()).exp() / cu;
        if gap == 0.0 || !weight.is_finite() {
            return 0.0;
        }
        let (x, left, right) = if t >= 0.0 {
            (b - gap, 2.0 * half - gap, gap)
        } else {
            (a + gap, gap, 2.0 * half - gap)
        };
        let v = f(x, left, right);
        if v.is_finite() {
            weight * v
        } else {
            0.0
        }
    };
    let mut h = 1.0;
    let mut sum = node(0.0);
    let mut k = 1;
    while k as f64 * h <= TANH_SINH_T_MAX {
        let t = k as f64 * h;
        sum += node(t) + node(-t);
        k += 1;
    }
    let mut estimate = sum * h * half;
    for level in 1..=TANH_SINH_MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= TANH_SINH_T_MAX {
            let t = k as f64 * h;
            sum += node(t) + node(-t);
            k += 2;
        }
        let next = sum * h * half;
        let delta = (next - estimate).abs();
        estimate = next;
        if level >= 3 && delta <= abs_tol {
            return Ok(estimate);
        }
    }
    if estimate.is_finite() {
        log::debug!("tanh-sinh on [{a}, {b}] stopped at the level cap");
        Ok(estimate)
    } else {
        Err(Error::Quadrature(format!(
            "tanh-sinh on [{a}, {b}] produced a non-finite estimate"
        )))
    }
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Eight-point Gauss-Legendre rule on `[a, b]`, for smooth integrands.
pub fn gauss_legendre_8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL8_NODES
        .iter()
        .zip(GL8_WEIGHTS)
        .map(|(&x, w)| w * (f(mid - half * x) + f(mid + half * x)))
        .sum::<f64>()
        * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        assert_eq!(hyp2f1(0.3, 0.2, 1.5, 0.0).unwrap(), 1.0);
        for &z in &[-0.5, -3.0, -1e4] {
            assert_eq!(hyp2f1(0.0, 0.7, 1.2, z).unwrap(), 1.0);
        }
    }

    #[test]
    fn log_identity() {
        // 2F1(1,1;2;z) = -ln(1-z)/z
        let v = hyp2f1(1.0, 1.0, 2.0, -1.0).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-14);
        for &z in &[-0.3, -5.0, -200.0] {
            let exact = -(1.0f64 - z).ln() / z;
            let v = hyp2f1(1.0, 1.0, 2.0, z).unwrap();
            assert!((v / exact - 1.0).abs() < 1e-12, "z={z}: {v} vs {exact}");
        }
    }

    #[test]
    fn closed_forms_in_unit_interval() {
        // 2F1(1/2,1;3/2;-x^2) = atan(x)/x
        for &x in &[0.2f64, 1.0, 3.0, 30.0] {
            let v = hyp2f1(0.5, 1.0, 1.5, -x * x).unwrap();
            assert!((v - x.atan() / x).abs() < 1e-12 * (x.atan() / x), "x={x}");
        }
        // 2F1(a,b;b;w) = (1-w)^{-a}
        for &w in &[0.1, 0.5, 0.9, 0.99] {
            let v = hyp2f1(0.3, 1.7, 1.7, w).unwrap();
            assert!((v - (1.0f64 - w).powf(-0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(hyp2f1(1.0, 1.0, -2.0, -0.5).is_err());
        assert!(hyp2f1(1.0, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn nonconvergence_is_reported() {
        // Integer c-a-b forces the direct series, which cannot reach the
        // tolerance this close to w = 1 within the term cap.
        match series(0.5, 0.5, 2.0, 1.0 - 1e-9) {
            Err(Error::Hypergeometric { terms, .. }) => assert_eq!(terms, SERIES_MAX_TERMS),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gamma_reference_values() {
        assert!((gamma(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-14);
        assert!((gamma(1.2) - 0.918_168_742_399_760_6).abs() < 1e-13);
        assert!((gamma(-0.2) + 5.821_148_568_626_828).abs() < 1e-12);
    }

    #[test]
    fn quadrature_rules() {
        let v = gauss_legendre_8(|x| x.powi(7) + x, 0.0, 2.0);
        assert!((v - (256.0 / 8.0 + 2.0)).abs() < 1e-12);
        let s = integrate_tanh_sinh(|x| x.powf(-0.4), 0.0, 1.0, 1e-13).unwrap();
        assert!((s - 1.0 / 0.6).abs() < 1e-11, "{s}");
        // (b - x)^{-0.9} on [1, 2] through the exact right gap
        let s = integrate_tanh_sinh_gaps(|_, _, r| r.powf(-0.9), 1.0, 2.0, 1e-13).unwrap();
        assert!((s - 10.0).abs() < 1e-9, "{s}");
        let s = integrate_tanh_sinh(|x| (-1.0 / x.powi(3)).exp(), 0.0, 1.0, 1e-15).unwrap();
        assert!((1.0 / s - 15.760_442_934_899).abs() < 1e-9);
    }
}
