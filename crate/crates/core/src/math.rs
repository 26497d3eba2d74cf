//! Small numeric helpers on top of `libm` (this crate has no `std`).

pub use libm::{exp, expm1, log, log1p, pow, sqrt};

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + log1p(exp(lo - hi))
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residuals (0 for two points).
    pub slope_stderr: f64,
    pub n_points: usize,
}

/// Streaming accumulator for [`LineFit`], centred on the first x to keep
/// the normal equations well conditioned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LineAccumulator {
    origin: Option<(f64, f64)>,
    n: usize,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
}

impl LineAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        let (x0, y0) = *self.origin.get_or_insert((x, y));
        let (x, y) = (x - x0, y - y0);
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.sxy += x * y;
        self.syy += y * y;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn fit(&self) -> Option<LineFit> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let vxx = self.sxx - self.sx * self.sx / n;
        if vxx <= 0.0 {
            return None;
        }
        let vxy = self.sxy - self.sx * self.sy / n;
        let vyy = self.syy - self.sy * self.sy / n;
        let slope = vxy / vxx;
        let (x0, y0) = self.origin.unwrap_or((0.0, 0.0));
        let intercept_c = (self.sy - slope * self.sx) / n;
        let intercept = y0 + intercept_c - slope * x0;
        let slope_stderr = if self.n > 2 {
            let rss = (vyy - slope * vxy).max(0.0);
            sqrt(rss / (n - 2.0) / vxx)
        } else {
            0.0
        };
        Some(LineFit {
            slope,
            intercept,
            slope_stderr,
            n_points: self.n,
        })
    }
}

pub fn fit_line(points: impl IntoIterator<Item = (f64, f64)>) -> Option<LineFit> {
    let mut acc = LineAccumulator::default();
    for (x, y) in points {
        acc.push(x, y);
    }
    acc.fit()
}

/// `a ≥ b` allowing a relative slack of [`TIE_TOLERANCE`], so that
/// thresholds such as `C·π = 1` survive rounding in `π = p_A − p_B`.
pub fn ge_tie(a: f64, b: f64) -> bool {
    a >= b - TIE_TOLERANCE * b.abs().max(1.0)
}

/// `a > b` strictly beyond the tie band.
pub fn gt_tie(a: f64, b: f64) -> bool {
    !ge_tie(b, a)
}

/// Relative half-width of the band within which two thresholds are equal.
pub const TIE_TOLERANCE: f64 = 1e-12;
