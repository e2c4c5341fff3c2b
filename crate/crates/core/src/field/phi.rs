use serde::{Deserialize, Serialize};

/// Piecewise-polynomial cutoff used as the weight in Θ.
///
/// Each piece is a polynomial in `t − start` with coefficients in ascending
/// order; the function is zero past the last breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiCutoff {
    pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Piece {
    start: f64,
    end: f64,
    coeffs: Vec<f64>,
}

impl Piece {
    fn eval(&self, t: f64) -> f64 {
        let u = t - self.start;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    fn deriv(&self, t: f64) -> f64 {
        let u = t - self.start;
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * u + k as f64 * c)
    }
}

impl Default for PhiCutoff {
    fn default() -> Self {
        Self::make_phi()
    }
}

impl PhiCutoff {
    /// `60 − 3t/2` on `[0, 8]`, then the cubic Hermite piece from
    /// `(48, −3/2)` at `t = 8` to `(0, 0)` at `t = 10`, and zero afterwards.
    pub fn make_phi() -> Self {
        // Hermite data on [8, 10] in the local variable u = t − 8, width 2.
        let (p0, m0, p1, m1, w) = (48.0, -1.5, 0.0, 0.0, 2.0);
        let c2 = (3.0 * (p1 - p0) - w * (2.0 * m0 + m1)) / (w * w);
        let c3 = (2.0 * (p0 - p1) + w * (m0 + m1)) / (w * w * w);
        PhiCutoff {
            pieces: vec![
                Piece {
                    start: 0.0,
                    end: 8.0,
                    coeffs: vec![60.0, -1.5],
                },
                Piece {
                    start: 8.0,
                    end: 10.0,
                    coeffs: vec![p0, m0, c2, c3],
                },
            ],
        }
    }

    /// End of the support.
    pub fn support_end(&self) -> f64 {
        self.pieces.last().map_or(0.0, |p| p.end)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().map(|p| p.end).collect()
    }

    fn piece(&self, t: f64) -> Option<&Piece> {
        if t < 0.0 {
            return self.pieces.first();
        }
        self.pieces.iter().find(|p| t < p.end)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.piece(t).map_or(0.0, |p| p.eval(t))
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.piece(t).map_or(0.0, |p| p.deriv(t))
    }

    /// One-sided limits `(φ(b−), φ(b+), φ′(b−), φ′(b+))` at a breakpoint.
    pub fn jumps_at(&self, b: f64) -> (f64, f64, f64, f64) {
        let left = self.pieces.iter().find(|p| p.end == b);
        let right = self.pieces.iter().find(|p| p.start == b);
        (
            left.map_or(0.0, |p| p.eval(b)),
            right.map_or(0.0, |p| p.eval(b)),
            left.map_or(0.0, |p| p.deriv(b)),
            right.map_or(0.0, |p| p.deriv(b)),
        )
    }
}
