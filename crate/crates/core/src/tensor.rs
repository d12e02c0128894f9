use serde::{Deserialize, Serialize};

/// A point or vector in the plane.
pub type Vec2 = [f64; 2];

/// Unit vector `e_j` for `j` in {1, 2}.
pub fn unit(direction: usize) -> Vec2 {
    match direction {
        1 => [1.0, 0.0],
        2 => [0.0, 1.0],
        _ => panic!("direction must be 1 or 2, got {direction}"),
    }
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Symmetric 2x2 matrix stored by its three independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat2 {
    pub const ZERO: SymMat2 = SymMat2 { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn iso(c: f64) -> Self {
        Self { xx: c, xy: 0.0, yy: c }
    }

    pub fn diag(xx: f64, yy: f64) -> Self {
        Self { xx, xy: 0.0, yy }
    }

    /// Symmetric part of a general 2x2 matrix given row-wise.
    pub fn symmetrize(m: [[f64; 2]; 2]) -> Self {
        Self { xx: m[0][0], xy: 0.5 * (m[0][1] + m[1][0]), yy: m[1][1] }
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// `a · K b`
    pub fn bilinear(&self, a: Vec2, b: Vec2) -> f64 {
        dot(a, self.apply(b))
    }

    /// Column `K e_j`.
    pub fn column(&self, direction: usize) -> Vec2 {
        self.apply(unit(direction))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { xx: s * self.xx, xy: s * self.xy, yy: s * self.yy }
    }

    pub fn add(&self, o: &SymMat2) -> Self {
        Self { xx: self.xx + o.xx, xy: self.xy + o.xy, yy: self.yy + o.yy }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_gap = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    pub fn is_spd(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite() && self.eigenvalues().0 > 0.0
    }

    /// Euclidean projection onto `{K : lo <= K <= hi}` (eigenvalue clamping).
    pub fn clamp_eigenvalues(&self, lo: f64, hi: f64) -> Self {
        let (l1, l2) = self.eigenvalues();
        if l1 >= lo && l2 <= hi {
            return *self;
        }
        let (c1, c2) = (l1.clamp(lo, hi), l2.clamp(lo, hi));
        if (l2 - l1).abs() <= f64::EPSILON * (l1.abs() + l2.abs()) {
            // Multiple eigenvalue: any orthonormal basis works.
            return SymMat2::iso(c1);
        }
        // Eigenvector of the larger eigenvalue.
        let v = if self.xy.abs() > 0.0 {
            let v = [self.xy, l2 - self.xx];
            let n = dot(v, v).sqrt();
            [v[0] / n, v[1] / n]
        } else if self.xx >= self.yy {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let w = [-v[1], v[0]];
        SymMat2 {
            xx: c2 * v[0] * v[0] + c1 * w[0] * w[0],
            xy: c2 * v[0] * v[1] + c1 * w[0] * w[1],
            yy: c2 * v[1] * v[1] + c1 * w[1] * w[1],
        }
    }

    pub fn max_abs_diff(&self, o: &SymMat2) -> f64 {
        (self.xx - o.xx).abs().max((self.xy - o.xy).abs()).max((self.yy - o.yy).abs())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.xx, self.yy, self.xy]
    }
}
