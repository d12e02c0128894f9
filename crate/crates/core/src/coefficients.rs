//! Periodic coefficient fields on the unit cell and their ε-rescaling.
//!
//! Every evaluator first reduces `y` modulo 1, so periodicity holds bit for bit
//! whenever `y` and `y + e_i` reduce to the same float.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::tensor::{SymMat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Constant(SymMat2),
    /// Phase `a` on `y_d mod 1 < 1/2`, phase `b` otherwise.
    Laminate {
        a: f64,
        b: f64,
        direction: usize,
    },
    /// `a` where `floor(2 y1) + floor(2 y2)` is even.
    Checkerboard {
        a: f64,
        b: f64,
    },
    SmoothTrig {
        base: f64,
        amp: f64,
    },
    /// Laminate whose phases are `a·diag(1, ratio)` and `b·diag(1, ratio)`.
    AnisotropicLaminate {
        a: f64,
        b: f64,
        ratio: f64,
        direction: usize,
    },
}

/// A periodic symmetric matrix field `k_per` on `(0, 1)²` with bounds `(c1, c2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    name: String,
    params: BTreeMap<String, f64>,
    kind: Kind,
    bounds: (f64, f64),
}

pub const COEFFICIENT_NAMES: [&str; 5] =
    ["constant", "laminate", "checkerboard", "smooth_trig", "anisotropic_laminate"];

fn frac(t: f64) -> f64 {
    let f = t - t.floor();
    // t slightly below an integer can round up to exactly 1.
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

impl CoefficientField {
    pub fn constant(k: SymMat2) -> Result<Self> {
        if !k.is_spd() {
            return Err(Error::NonSpdCoefficient(format!("{k:?}")));
        }
        let (lo, hi) = k.eigenvalues();
        let params = BTreeMap::from([("k11".into(), k.xx), ("k12".into(), k.xy), ("k22".into(), k.yy)]);
        Ok(Self { name: "constant".into(), params, kind: Kind::Constant(k), bounds: (lo, hi) })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Parameters with defaults filled in.
    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Coercivity and continuity constants `(c1, c2)`.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Discontinuous fields fall outside the Hölder-continuity assumption.
    pub fn outside_theory(&self) -> bool {
        matches!(self.kind, Kind::Laminate { .. } | Kind::Checkerboard { .. } | Kind::AnisotropicLaminate { .. })
    }

    /// Closed-form homogenized tensor where one exists (constants and laminates).
    pub fn exact_homogenized(&self) -> Option<SymMat2> {
        let layered = |h: f64, ar: f64, direction: usize| match direction {
            1 => SymMat2::diag(h, ar),
            _ => SymMat2::diag(ar, h),
        };
        match self.kind {
            Kind::Constant(k) => Some(k),
            Kind::Laminate { a, b, direction } => Some(layered(harmonic_mean(a, b), 0.5 * (a + b), direction)),
            Kind::AnisotropicLaminate { a, b, ratio, direction } => {
                let (h, ar) = (harmonic_mean(a, b), 0.5 * (a + b));
                Some(match direction {
                    1 => SymMat2::diag(h, ratio * ar),
                    _ => SymMat2::diag(ar, ratio * h),
                })
            }
            Kind::Checkerboard { .. } | Kind::SmoothTrig { .. } => None,
        }
    }

    /// `k_per(y)`.
    pub fn eval(&self, y: Vec2) -> SymMat2 {
        let y = [frac(y[0]), frac(y[1])];
        match self.kind {
            Kind::Constant(k) => k,
            Kind::Laminate { a, b, direction } => SymMat2::iso(if y[direction - 1] < 0.5 { a } else { b }),
            Kind::Checkerboard { a, b } => {
                let parity = ((2.0 * y[0]) as u8 + (2.0 * y[1]) as u8) % 2;
                SymMat2::iso(if parity == 0 { a } else { b })
            }
            Kind::SmoothTrig { base, amp } => SymMat2::iso(base + amp * (TAU * y[0]).sin() * (TAU * y[1]).sin()),
            Kind::AnisotropicLaminate { a, b, ratio, direction } => {
                let c = if y[direction - 1] < 0.5 { a } else { b };
                SymMat2::diag(c, c * ratio)
            }
        }
    }

    /// `k_ε(x) = k_per(x / ε)` at each point.
    pub fn sample_k_eps(&self, eps: f64, points: &[Vec2]) -> Vec<SymMat2> {
        points.iter().map(|p| self.eval([p[0] / eps, p[1] / eps])).collect()
    }

    /// Whether `k_per` commutes with the swap `(y1, y2) -> (y2, y1)` as a scalar field.
    pub fn is_swap_isotropic(&self) -> bool {
        match self.kind {
            Kind::Constant(k) => k.xy == 0.0 && k.xx == k.yy,
            Kind::Checkerboard { .. } | Kind::SmoothTrig { .. } => true,
            _ => false,
        }
    }
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 / (1.0 / a + 1.0 / b)
}

struct Params<'a> {
    name: &'a str,
    given: &'a BTreeMap<String, f64>,
    used: BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    fn get(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.given.get(key).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{}: {key} = {v}", self.name)));
        }
        self.used.insert(key.to_string(), v);
        Ok(v)
    }

    fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        if v <= 0.0 {
            return Err(Error::NonSpdCoefficient(format!("{}: {key} = {v} must be positive", self.name)));
        }
        Ok(v)
    }

    fn direction(&mut self) -> Result<usize> {
        let d = self.get("direction", 1.0)?;
        if d == 1.0 || d == 2.0 {
            Ok(d as usize)
        } else {
            Err(Error::InvalidParameter(format!("{}: direction must be 1 or 2, got {d}", self.name)))
        }
    }

    fn finish(self) -> Result<BTreeMap<String, f64>> {
        if let Some(k) = self.given.keys().find(|k| !self.used.contains_key(*k)) {
            return Err(Error::InvalidParameter(format!("{}: unknown parameter {k}", self.name)));
        }
        Ok(self.used)
    }
}

/// Builds a named field. Missing parameters take documented defaults:
///
/// | name | parameters |
/// |---|---|
/// | `constant` | `c` (isotropic) or `k11`, `k22`, `k12`; default `c = 1` |
/// | `laminate` | `a = 1`, `b = 4`, `direction = 1` |
/// | `checkerboard` | `a = 1`, `b = 4` |
/// | `smooth_trig` | `base = 2`, `amp = 1` |
/// | `anisotropic_laminate` | `a = 1`, `b = 4`, `ratio = 2`, `direction = 1` |
pub fn coefficient_zoo(name: &str, params: &BTreeMap<String, f64>) -> Result<CoefficientField> {
    let mut p = Params { name, given: params, used: BTreeMap::new() };
    let (kind, bounds) = match name {
        "constant" => {
            let k = if params.contains_key("c") {
                SymMat2::iso(p.get("c", 1.0)?)
            } else if ["k11", "k22", "k12"].iter().any(|k| params.contains_key(*k)) {
                SymMat2::new(p.get("k11", 1.0)?, p.get("k12", 0.0)?, p.get("k22", 1.0)?)
            } else {
                SymMat2::iso(p.get("c", 1.0)?)
            };
            if !k.is_spd() {
                return Err(Error::NonSpdCoefficient(format!("constant: {k:?}")));
            }
            (Kind::Constant(k), k.eigenvalues())
        }
        "laminate" => {
            let (a, b) = (p.positive("a", 1.0)?, p.positive("b", 4.0)?);
            let direction = p.direction()?;
            (Kind::Laminate { a, b, direction }, (a.min(b), a.max(b)))
        }
        "checkerboard" => {
            let (a, b) = (p.positive("a", 1.0)?, p.positive("b", 4.0)?);
            (Kind::Checkerboard { a, b }, (a.min(b), a.max(b)))
        }
        "smooth_trig" => {
            let base = p.positive("base", 2.0)?;
            let amp = p.get("amp", 1.0)?;
            if amp.abs() >= base {
                return Err(Error::NonSpdCoefficient(format!(
                    "smooth_trig: |amp| = {} must be below base = {base}",
                    amp.abs()
                )));
            }
            (Kind::SmoothTrig { base, amp }, (base - amp.abs(), base + amp.abs()))
        }
        "anisotropic_laminate" => {
            let (a, b) = (p.positive("a", 1.0)?, p.positive("b", 4.0)?);
            let ratio = p.positive("ratio", 2.0)?;
            let direction = p.direction()?;
            let ext = [a, b, a * ratio, b * ratio];
            let lo = ext.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ext.iter().copied().fold(0.0, f64::max);
            (Kind::AnisotropicLaminate { a, b, ratio, direction }, (lo, hi))
        }
        other => return Err(Error::UnknownCoefficient(other.to_string())),
    };
    let params = p.finish()?;
    Ok(CoefficientField { name: name.to_string(), params, kind, bounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zoo(name: &str, kv: &[(&str, f64)]) -> CoefficientField {
        let params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        coefficient_zoo(name, &params).unwrap()
    }

    fn all_fields() -> Vec<CoefficientField> {
        vec![
            zoo("constant", &[("c", 3.0)]),
            zoo("constant", &[("k11", 2.0), ("k22", 3.0), ("k12", 0.5)]),
            zoo("laminate", &[]),
            zoo("laminate", &[("direction", 2.0)]),
            zoo("checkerboard", &[]),
            zoo("smooth_trig", &[]),
            zoo("anisotropic_laminate", &[]),
        ]
    }

    #[test]
    fn constant_is_constant() {
        let f = zoo("constant", &[("c", 3.0)]);
        let pts = [[0.1, 0.2], [-3.0, 7.5], [1e3, -2.0]];
        for eps in [0.1, 1.0, 7.0] {
            assert!(f.sample_k_eps(eps, &pts).iter().all(|k| *k == SymMat2::iso(3.0)));
        }
        assert_eq!(f.exact_homogenized(), Some(SymMat2::iso(3.0)));
    }

    #[test]
    fn smooth_field_quarter_point() {
        // 2 + sin(2π y1) sin(2π y2) at y = (1/4, 1/4) is 3.
        let f = zoo("smooth_trig", &[]);
        let k = f.sample_k_eps(1.0, &[[0.25, 0.25]])[0];
        assert!((k.xx - 3.0).abs() < 1e-15 && k.xy == 0.0 && k.xx == k.yy);
        assert!(!f.outside_theory());
    }

    #[test]
    fn checkerboard_layout() {
        let f = zoo("checkerboard", &[]);
        let eps = 0.125;
        let at = |y1: f64, y2: f64| f.sample_k_eps(eps, &[[y1 * eps, y2 * eps]])[0].xx;
        assert_eq!(at(0.2, 0.2), 1.0);
        assert_eq!(at(0.6, 0.2), 4.0);
        assert_eq!(at(0.2, 0.6), 4.0);
        // Diagonal neighbour shares the colour of the origin cell.
        assert_eq!(at(0.6, 0.6), 1.0);
        assert_eq!(at(-0.2, 0.2), 4.0);
        assert!(f.outside_theory());
    }

    #[test]
    fn laminate_varies_along_its_direction() {
        let f = zoo("laminate", &[("a", 1.0), ("b", 4.0), ("direction", 1.0)]);
        assert_eq!(f.eval([0.25, 0.9]).xx, 1.0);
        assert_eq!(f.eval([0.75, 0.1]).xx, 4.0);
        assert_eq!(f.eval([0.75, 0.6]).xx, 4.0);
        let k = f.exact_homogenized().unwrap();
        assert!((k.xx - 1.6).abs() < 1e-15 && (k.yy - 2.5).abs() < 1e-15);
    }

    #[test]
    fn anisotropic_laminate_tensor() {
        let f = zoo("anisotropic_laminate", &[]);
        assert_eq!(f.eval([0.25, 0.0]), SymMat2::diag(1.0, 2.0));
        assert_eq!(f.eval([0.75, 0.0]), SymMat2::diag(4.0, 8.0));
        let k = f.exact_homogenized().unwrap();
        assert!((k.xx - 1.6).abs() < 1e-15 && (k.yy - 5.0).abs() < 1e-15);
        assert_eq!(f.bounds(), (1.0, 8.0));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let empty = BTreeMap::new();
        assert!(matches!(coefficient_zoo("voronoi", &empty), Err(Error::UnknownCoefficient(_))));
        let p = BTreeMap::from([("bse".to_string(), 2.0)]);
        assert!(matches!(coefficient_zoo("smooth_trig", &p), Err(Error::InvalidParameter(_))));
        let p = BTreeMap::from([("amp".to_string(), 3.0)]);
        assert!(matches!(coefficient_zoo("smooth_trig", &p), Err(Error::NonSpdCoefficient(_))));
        let p = BTreeMap::from([("a".to_string(), -1.0)]);
        assert!(matches!(coefficient_zoo("laminate", &p), Err(Error::NonSpdCoefficient(_))));
        let p = BTreeMap::from([("direction".to_string(), 3.0)]);
        assert!(matches!(coefficient_zoo("laminate", &p), Err(Error::InvalidParameter(_))));
        let p = BTreeMap::from([("k11".to_string(), 1.0), ("k12".to_string(), 2.0)]);
        assert!(matches!(coefficient_zoo("constant", &p), Err(Error::NonSpdCoefficient(_))));
    }

    #[test]
    fn periodic_symmetric_and_bounded_on_grid() {
        for f in all_fields() {
            let (c1, c2) = f.bounds();
            for i in 0..64 {
                for j in 0..64 {
                    let y = [i as f64 / 64.0, j as f64 / 64.0];
                    let k = f.eval(y);
                    assert_eq!(k, f.eval([y[0] + 1.0, y[1]]), "{}", f.name());
                    assert_eq!(k, f.eval([y[0], y[1] + 1.0]), "{}", f.name());
                    let (lo, hi) = k.eigenvalues();
                    assert!(lo >= c1 - 1e-14 && hi <= c2 + 1e-14, "{}", f.name());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn coercive_and_bounded(y1 in -10.0..10.0f64, y2 in -10.0..10.0f64, th in 0.0..TAU) {
            let xi = [th.cos(), th.sin()];
            for f in all_fields() {
                let (c1, c2) = f.bounds();
                let k = f.eval([y1, y2]);
                prop_assert!(k.bilinear(xi, xi) >= c1 * (1.0 - 1e-14));
                let kx = k.apply(xi);
                prop_assert!((kx[0] * kx[0] + kx[1] * kx[1]).sqrt() <= c2 * (1.0 + 1e-14));
            }
        }

        #[test]
        fn rescaling_matches_cell_evaluation(x1 in -4.0..4.0f64, x2 in -4.0..4.0f64, n in 1u32..8) {
            let eps = 1.0 / n as f64;
            let f = zoo("smooth_trig", &[]);
            let k = f.sample_k_eps(eps, &[[x1, x2]])[0];
            prop_assert_eq!(k, f.eval([x1 / eps, x2 / eps]));
        }
    }
}
