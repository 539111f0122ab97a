//! Special functions and quadrature shared by the samplers and tests.

use statrs::function::gamma::ln_gamma;

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 20_000;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `ln ∫₀ˣ t^(a-1) (1-t)^(b-1) dt` for `a, b > 0`, stable for large `a`, `b`.
pub fn ln_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x >= 1.0 {
        return ln_beta(a, b);
    }
    let front = |x: f64, a: f64, b: f64| a * x.ln() + b * (-x).ln_1p();
    if x < (a + 1.0) / (a + b + 2.0) {
        front(x, a, b) + beta_cf(x, a, b).ln() - a.ln()
    } else {
        // complement: B(a,b) - ∫_0^{1-x} t^(b-1)(1-t)^(a-1) dt
        let full = ln_beta(a, b);
        let y = 1.0 - x;
        let tail = front(y, b, a) + beta_cf(y, b, a).ln() - b.ln();
        full + (-(tail - full).exp()).ln_1p()
    }
}

/// `ln(Σ exp(v))` over the iterator, `-inf` for an empty one.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// [`log_sum_exp`] over a slice without allocating.
pub fn log_sum_exp_slice(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre estimate of `ln ∫_lo^hi exp(log_f(x)) dx`,
/// accumulated in log space. `panels` equal panels of `per_panel` nodes each.
pub fn log_quadrature(
    log_f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    panels: usize,
    per_panel: usize,
) -> f64 {
    let (nodes, weights) = gauss_legendre(per_panel);
    let width = (hi - lo) / panels as f64;
    let mut terms = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let a = lo + p as f64 * width;
        let half = width / 2.0;
        for (x, w) in nodes.iter().zip(&weights) {
            let t = a + half * (x + 1.0);
            terms.push((w * half).ln() + log_f(t));
        }
    }
    log_sum_exp(terms)
}
