#![allow(dead_code)]

use powerprior::stats::norm_cdf;

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G_WEIGHTS[3];
    for j in 0..7 {
        let x = h * GK_NODES[j];
        let pair = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += G_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth >= 50 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, tol * 0.5, depth + 1) + rec(f, m, b, tol * 0.5, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Pr(U ≥ 0, V ≥ 0) + Pr(U ≤ 0, V ≤ 0) for (U, V) with common mean `delta`,
/// common variance `var` and covariance `cov`, by integrating the conditional
/// normal of V given U over the standardized U axis.
pub fn orthant_quadrature_oracle(delta: f64, var: f64, cov: f64) -> f64 {
    let sd = var.sqrt();
    let rho = cov / var;
    let d = delta / sd;
    let s = (1.0 - rho * rho).sqrt();
    // U = sd (d + x), x ~ N(0, 1); V | x ~ N(sd (d + ρ x), sd² (1 − ρ²)).
    let upper = |x: f64| phi(x) * norm_cdf((d + rho * x) / s);
    let lower = |x: f64| phi(x) * norm_cdf(-(d + rho * x) / s);
    let limit = 40.0;
    let pieces = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        if a >= b {
            return 0.0;
        }
        // Split where the conditional CDF switches so the step is resolved.
        let mut cuts = vec![a, b];
        if rho.abs() > 1e-12 {
            let x0 = -d / rho;
            if x0 > a && x0 < b {
                cuts.push(x0);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2).map(|w| integrate(f, w[0], w[1], 1e-14)).sum::<f64>()
    };
    pieces(&upper, (-d).max(-limit), limit) + pieces(&lower, -limit, (-d).min(limit))
}

/// Uniform draws for randomized checks, independent of the crate's streams.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
    }

    pub fn int(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.next_u64() % (hi - lo + 1)
    }
}
