//! Analytic lagrangians `F(p)` on the gradient plane with `F(0) = 0`,
//! `DF(0) = 0`, `D2F(0) = I`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::sym_eigen;

/// Closed-form lagrangians.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lagrangian {
    /// `|p|^2 / 2`.
    Quadratic,
    /// `(x^2 + y^2) / (2 (1 + y))`, the hodograph lagrangian of the
    /// one-phase problem.
    Hodograph,
    /// `(x^2 + y^2) / (1 + y)` as printed for the two-phase reduction. Its
    /// Hessian at the origin is `2 I`, so it fails normalization.
    TwoPhaseLiteral,
    /// `cosh x + cosh y - 2`.
    Cosh,
}

impl Lagrangian {
    pub fn name(self) -> &'static str {
        match self {
            Lagrangian::Quadratic => "quadratic",
            Lagrangian::Hodograph => "hodograph",
            Lagrangian::TwoPhaseLiteral => "two-phase-literal",
            Lagrangian::Cosh => "cosh",
        }
    }
}

impl fmt::Display for Lagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lagrangian {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Lagrangian::Quadratic),
            "hodograph" | "two-phase" => Ok(Lagrangian::Hodograph),
            "two-phase-literal" => Ok(Lagrangian::TwoPhaseLiteral),
            "cosh" => Ok(Lagrangian::Cosh),
            other => Err(Error::InvalidArgument(format!("unknown lagrangian {other:?}"))),
        }
    }
}

/// A validated lagrangian together with the radius of the ball of
/// gradients on which it may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlinearity {
    kind: Lagrangian,
    radius: f64,
}

impl Nonlinearity {
    pub const DEFAULT_RADIUS: f64 = 0.5;

    pub fn new(kind: Lagrangian, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidArgument(format!("validity radius {radius} must lie in (0, 1)")));
        }
        let n = Self { kind, radius };
        n.validate()?;
        Ok(n)
    }

    pub fn quadratic() -> Self {
        Self { kind: Lagrangian::Quadratic, radius: Self::DEFAULT_RADIUS }
    }

    pub fn hodograph() -> Self {
        Self { kind: Lagrangian::Hodograph, radius: Self::DEFAULT_RADIUS }
    }

    pub fn kind(&self) -> Lagrangian {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn validate(&self) -> Result<()> {
        let z = [0.0, 0.0];
        let g = self.grad(z);
        let h = self.hess(z);
        let defect = self
            .value(z)
            .abs()
            .max(g[0].abs())
            .max(g[1].abs())
            .max((h[0] - 1.0).abs())
            .max(h[1].abs())
            .max((h[2] - 1.0).abs());
        if defect > 1e-12 {
            return Err(Error::Normalization(format!("{} deviates by {defect:e} at the origin", self.kind)));
        }
        for k in 0..64 {
            let t = 2.0 * PI * k as f64 / 64.0;
            let p = [self.radius * t.cos(), self.radius * t.sin()];
            let h = self.hess(p);
            let (lo, _) = sym_eigen(h[0], h[1], h[2]);
            if !(lo > 0.0) {
                return Err(Error::Ellipticity(format!("Hessian of {} not positive at {p:?}", self.kind)));
            }
        }
        Ok(())
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        match self.kind {
            Lagrangian::Quadratic => 0.5 * (x * x + y * y),
            Lagrangian::Hodograph => (x * x + y * y) / (2.0 * (1.0 + y)),
            Lagrangian::TwoPhaseLiteral => (x * x + y * y) / (1.0 + y),
            Lagrangian::Cosh => x.cosh() + y.cosh() - 2.0,
        }
    }

    pub fn grad(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        match self.kind {
            Lagrangian::Quadratic => [x, y],
            Lagrangian::Hodograph => {
                let s = 1.0 + y;
                [x / s, 0.5 - (1.0 + x * x) / (2.0 * s * s)]
            }
            Lagrangian::TwoPhaseLiteral => {
                let s = 1.0 + y;
                [2.0 * x / s, 1.0 - (1.0 + x * x) / (s * s)]
            }
            Lagrangian::Cosh => [x.sinh(), y.sinh()],
        }
    }

    /// Hessian entries `[F_xx, F_xy, F_yy]`.
    pub fn hess(&self, p: [f64; 2]) -> [f64; 3] {
        let [x, y] = p;
        match self.kind {
            Lagrangian::Quadratic => [1.0, 0.0, 1.0],
            Lagrangian::Hodograph => {
                let s = 1.0 + y;
                [1.0 / s, -x / (s * s), (1.0 + x * x) / (s * s * s)]
            }
            Lagrangian::TwoPhaseLiteral => {
                let s = 1.0 + y;
                [2.0 / s, -2.0 * x / (s * s), 2.0 * (1.0 + x * x) / (s * s * s)]
            }
            Lagrangian::Cosh => [x.cosh(), 0.0, y.cosh()],
        }
    }

    pub fn check(&self, p: [f64; 2]) -> Result<()> {
        let norm = p[0].hypot(p[1]);
        if !(norm <= self.radius) {
            return Err(Error::GradientOutOfRange { norm, radius: self.radius });
        }
        Ok(())
    }

    /// Segment mean of the Hessian, `integral over [0,1] of D2F(q + t (p - q))`,
    /// by the given Gauss rule on `[0, 1]`.
    pub fn segment_hessian(&self, p: [f64; 2], q: [f64; 2], rule: &(Vec<f64>, Vec<f64>)) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (&t, &w) in rule.0.iter().zip(&rule.1) {
            let h = self.hess([q[0] + t * (p[0] - q[0]), q[1] + t * (p[1] - q[1])]);
            m[0] += w * h[0];
            m[1] += w * h[1];
            m[2] += w * h[2];
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(n: &Nonlinearity, p: [f64; 2]) {
        let e = 1e-6;
        let g = n.grad(p);
        let gx = (n.value([p[0] + e, p[1]]) - n.value([p[0] - e, p[1]])) / (2.0 * e);
        let gy = (n.value([p[0], p[1] + e]) - n.value([p[0], p[1] - e])) / (2.0 * e);
        assert!((g[0] - gx).abs() < 1e-8 && (g[1] - gy).abs() < 1e-8);
        let h = n.hess(p);
        let hx = n.grad([p[0] + e, p[1]]);
        let hx0 = n.grad([p[0] - e, p[1]]);
        let hy = n.grad([p[0], p[1] + e]);
        let hy0 = n.grad([p[0], p[1] - e]);
        assert!((h[0] - (hx[0] - hx0[0]) / (2.0 * e)).abs() < 1e-8);
        assert!((h[1] - (hx[1] - hx0[1]) / (2.0 * e)).abs() < 1e-8);
        assert!((h[1] - (hy[0] - hy0[0]) / (2.0 * e)).abs() < 1e-8);
        assert!((h[2] - (hy[1] - hy0[1]) / (2.0 * e)).abs() < 1e-8);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for kind in [Lagrangian::Quadratic, Lagrangian::Hodograph, Lagrangian::Cosh] {
            let n = Nonlinearity::new(kind, 0.5).unwrap();
            for p in [[0.1, 0.2], [-0.3, 0.1], [0.2, -0.35]] {
                fd_check(&n, p);
            }
        }
    }

    #[test]
    fn hodograph_hessian_by_hand() {
        let h = Nonlinearity::hodograph().hess([0.1, 0.2]);
        assert!((h[0] - 1.0 / 1.2).abs() < 1e-15);
        assert!((h[1] + 0.1 / 1.44).abs() < 1e-15);
        assert!((h[2] - 1.01 / 1.728).abs() < 1e-15);
    }

    #[test]
    fn literal_two_phase_fails_normalization() {
        assert!(matches!(Nonlinearity::new(Lagrangian::TwoPhaseLiteral, 0.5), Err(Error::Normalization(_))));
        assert_eq!("two-phase".parse::<Lagrangian>().unwrap(), Lagrangian::Hodograph);
    }

    #[test]
    fn out_of_ball_rejected() {
        let n = Nonlinearity::hodograph();
        assert!(n.check([0.3, 0.3]).is_ok());
        assert!(matches!(n.check([0.4, 0.4]), Err(Error::GradientOutOfRange { .. })));
    }

    proptest::proptest! {
        // the averaged Hessian along the segment carries DF(p) to DF(q)
        #[test]
        fn segment_hessian_is_a_secant(
            p in proptest::array::uniform2(-0.3f64..0.3),
            q in proptest::array::uniform2(-0.3f64..0.3),
        ) {
            let n = Nonlinearity::hodograph();
            let rule = crate::quad::gauss_legendre(12);
            let m = n.segment_hessian(p, q, &rule);
            let (gp, gq) = (n.grad(p), n.grad(q));
            let d = [p[0] - q[0], p[1] - q[1]];
            let lhs = [gp[0] - gq[0], gp[1] - gq[1]];
            let rhs = [m[0] * d[0] + m[1] * d[1], m[1] * d[0] + m[2] * d[1]];
            proptest::prop_assert!((lhs[0] - rhs[0]).abs() < 1e-12 && (lhs[1] - rhs[1]).abs() < 1e-12);
        }
    }
}
