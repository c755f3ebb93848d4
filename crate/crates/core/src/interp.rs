//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson).

/// Interpolant through `(xs[k], ys[k])` with strictly increasing `xs`.
/// Monotone data give a monotone interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2, "need at least two samples");
        debug_assert!(xs.windows(2).all(|w| w[1] > w[0]));
        let slopes = fritsch_carlson_slopes(&xs, &ys);
        Self { xs, ys, slopes }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Index `k` of the interval `[xs[k], xs[k+1]]` holding `x` (clamped).
    pub fn interval(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_in(self.interval(x), x)
    }

    pub fn eval_in(&self, k: usize, x: f64) -> f64 {
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let (h00, h10, h01, h11) = hermite_basis(s);
        h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1]
    }

    /// Solves `eval(x) = y` for increasing data by safeguarded Newton
    /// iteration with a bisection fallback.
    pub fn invert(&self, y: f64) -> f64 {
        let n = self.ys.len();
        let k = match self.ys.partition_point(|&v| v <= y) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        if y == self.ys[k] {
            return self.xs[k];
        }
        if y == self.ys[k + 1] {
            return self.xs[k + 1];
        }
        let (mut lo, mut hi) = (self.xs[k], self.xs[k + 1]);
        // linear guess
        let mut x = lo + (y - self.ys[k]) / (self.ys[k + 1] - self.ys[k]) * (hi - lo);
        for _ in 0..100 {
            let r = self.eval_in(k, x) - y;
            if r == 0.0 {
                return x;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.derivative_in(k, x);
            let newton = x - r / d;
            x = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
        }
        x
    }

    fn derivative_in(&self, k: usize, x: f64) -> f64 {
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let d00 = 6.0 * s * s - 6.0 * s;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * s * s - 2.0 * s;
        (d00 * self.ys[k] + d01 * self.ys[k + 1]) / h + d10 * self.slopes[k] + d11 * self.slopes[k + 1]
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

fn fritsch_carlson_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let secants: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
    if n == 2 {
        return vec![secants[0]; 2];
    }
    let mut m = vec![0.0; n];
    m[0] = end_slope(xs[1] - xs[0], xs[2] - xs[1], secants[0], secants[1]);
    m[n - 1] = end_slope(
        xs[n - 1] - xs[n - 2],
        xs[n - 2] - xs[n - 3],
        secants[n - 2],
        secants[n - 3],
    );
    for k in 1..n - 1 {
        let (a, b) = (secants[k - 1], secants[k]);
        m[k] = if a * b <= 0.0 {
            0.0
        } else {
            // weighted harmonic mean
            let (h0, h1) = (xs[k] - xs[k - 1], xs[k + 1] - xs[k]);
            let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
            (w1 + w2) / (w1 / a + w2 / b)
        };
    }
    for k in 0..n - 1 {
        let d = secants[k];
        if d == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let (a, b) = (m[k] / d, m[k + 1] / d);
        let r = a * a + b * b;
        if r > 9.0 {
            let t = 3.0 / r.sqrt();
            m[k] = t * a * d;
            m[k + 1] = t * b * d;
        }
    }
    m
}

/// Three-point one-sided slope, limited to preserve monotonicity.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}
