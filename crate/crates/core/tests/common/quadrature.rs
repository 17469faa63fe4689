//! Adaptive Gauss-Kronrod (G7/K15) quadrature and a brute-force posterior
//! mean of a Bernoulli-Gaussian coefficient observed in Gaussian noise.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]`, splitting the initial interval into
/// `panels` pieces and bisecting the worst piece until the summed error
/// estimate is below `rel_tol * |total| + abs_tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, rel_tol: f64, abs_tol: f64) -> f64 {
    let width = (b - a) / panels as f64;
    let mut pieces: Vec<(f64, f64, f64, f64)> = (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * width, a + (i + 1) as f64 * width);
            let (v, e) = gk15(&f, lo, hi);
            (lo, hi, v, e)
        })
        .collect();
    for _ in 0..20_000 {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() + abs_tol {
            return total;
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    pieces.iter().map(|p| p.2).sum()
}

fn log_normal(x: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + x * x / var)
}

/// `E[theta | q]` for `theta ~ (1-p) delta_0 + p N(0, tau)` and
/// `q = theta + N(0, sigma2)`, with the slab integrals done numerically.
///
/// The log slab integrand is concave, so its peak is found by golden-section
/// search and its width from a finite-difference curvature; the integrals
/// then run over a window of 20 widths on either side of the peak.
pub fn bg_posterior_mean(q: f64, sigma2: f64, p: f64, tau: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    let log_slab = |t: f64| log_normal(t, tau) + log_normal(q - t, sigma2);
    let (mut lo, mut hi) = (-q.abs() - 1.0, q.abs() + 1.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let (c, d) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if log_slab(c) > log_slab(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    let center = 0.5 * (lo + hi);
    let peak = log_slab(center);
    let h = 1e-3 * (tau.min(sigma2)).sqrt();
    let curvature = -(log_slab(center + h) - 2.0 * peak + log_slab(center - h)) / (h * h);
    let width = 20.0 / curvature.sqrt();
    let (a, b) = (center - width, center + width);
    let w = |t: f64| (log_slab(t) - peak).exp();
    let z = integrate(w, a, b, 16, 1e-14, 0.0);
    let abs_m1 = integrate(|t| t.abs() * w(t), a, b, 16, 1e-14, 0.0);
    let m1 = integrate(|t| t * w(t), a, b, 16, 1e-14, 1e-14 * abs_m1);
    let spike = if p < 1.0 {
        ((1.0 - p).ln() + log_normal(q, sigma2) - peak).exp()
    } else {
        0.0
    };
    p * m1 / (spike + p * z)
}
