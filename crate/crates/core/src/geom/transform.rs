use crate::error::{Error, Result};
use crate::geom::NormCoord;

/// Transforms with `|det|` at or below this are treated as singular.
pub const DET_EPS: f64 = 1e-9;

/// Six-parameter planar transform `(x, y) -> (a x + b y + c, d x + e y + f)`.
///
/// Stored row-major as `[a, b, c, d, e, f]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform2D {
    pub m: [f64; 6],
}

impl Default for AffineTransform2D {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineTransform2D {
    pub const IDENTITY: Self = Self {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    };

    pub fn new(m: [f64; 6]) -> Result<Self> {
        if let Some(i) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePayload(i));
        }
        Ok(Self { m })
    }

    pub fn from_rows(r0: [f64; 3], r1: [f64; 3]) -> Result<Self> {
        Self::new([r0[0], r0[1], r0[2], r1[0], r1[1], r1[2]])
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [1.0, 0.0, tx, 0.0, 1.0, ty],
        }
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Self {
            m: [sx, 0.0, 0.0, 0.0, sy, 0.0],
        }
    }

    /// Scale + rotation (radians) + translation.
    pub fn similarity(scale: f64, angle: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            m: [scale * c, -scale * s, tx, scale * s, scale * c, ty],
        }
    }

    #[inline]
    pub fn apply(&self, p: NormCoord) -> NormCoord {
        let [a, b, c, d, e, f] = self.m;
        NormCoord::new(a * p.x + b * p.y + c, d * p.x + e * p.y + f)
    }

    pub fn det(&self) -> f64 {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    pub fn is_invertible(&self) -> bool {
        self.det().abs() > DET_EPS
    }

    /// Closed-form inverse of the 2x3 matrix.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.abs() <= DET_EPS {
            return Err(Error::SingularTransform(det.abs()));
        }
        let [a, b, c, d, e, f] = self.m;
        let ia = e / det;
        let ib = -b / det;
        let id = -d / det;
        let ie = a / det;
        Ok(Self {
            m: [ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)],
        })
    }

    /// `self ∘ inner`: `inner` is applied first.
    pub fn compose(&self, inner: &AffineTransform2D) -> AffineTransform2D {
        let [a, b, c, d, e, f] = self.m;
        let [p, q, r, s, t, u] = inner.m;
        AffineTransform2D {
            m: [
                a * p + b * s,
                a * q + b * t,
                a * r + b * u + c,
                d * p + e * s,
                d * q + e * t,
                d * r + e * u + f,
            ],
        }
    }

    pub fn to_homography(&self) -> Homography2D {
        let [a, b, c, d, e, f] = self.m;
        Homography2D {
            h: [a, b, c, d, e, f, 0.0, 0.0, 1.0],
        }
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &AffineTransform2D) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Projective planar transform, row-major 3x3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography2D {
    pub h: [f64; 9],
}

impl Homography2D {
    pub fn new(h: [f64; 9]) -> Result<Self> {
        if let Some(i) = h.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePayload(i));
        }
        Ok(Self { h })
    }

    #[inline]
    pub fn apply(&self, p: NormCoord) -> NormCoord {
        let h = &self.h;
        let w = h[6] * p.x + h[7] * p.y + h[8];
        NormCoord::new(
            (h[0] * p.x + h[1] * p.y + h[2]) / w,
            (h[3] * p.x + h[4] * p.y + h[5]) / w,
        )
    }

    pub fn det(&self) -> f64 {
        let h = &self.h;
        h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6])
            + h[2] * (h[3] * h[7] - h[4] * h[6])
    }

    /// Scales so that the bottom-right entry is one (when it is not ~0).
    pub fn normalized(&self) -> Self {
        let s = self.h[8];
        if s.abs() < 1e-300 {
            return *self;
        }
        let mut h = self.h;
        h.iter_mut().for_each(|v| *v /= s);
        Self { h }
    }

    pub fn inverse(&self) -> Result<Self> {
        let h = &self.h;
        let det = self.det();
        let scale = h.iter().map(|v| v.abs()).fold(0.0, f64::max).powi(3);
        if !(det.abs() > DET_EPS * scale.max(1e-300)) {
            return Err(Error::SingularTransform(det.abs()));
        }
        let adj = [
            h[4] * h[8] - h[5] * h[7],
            h[2] * h[7] - h[1] * h[8],
            h[1] * h[5] - h[2] * h[4],
            h[5] * h[6] - h[3] * h[8],
            h[0] * h[8] - h[2] * h[6],
            h[2] * h[3] - h[0] * h[5],
            h[3] * h[7] - h[4] * h[6],
            h[1] * h[6] - h[0] * h[7],
            h[0] * h[4] - h[1] * h[3],
        ];
        let mut inv = [0.0; 9];
        for (o, a) in inv.iter_mut().zip(adj) {
            *o = a / det;
        }
        Ok(Self { h: inv }.normalized())
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Homography2D) -> Homography2D {
        let a = &self.h;
        let b = &inner.h;
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = (0..3).map(|k| a[r * 3 + k] * b[k * 3 + c]).sum();
            }
        }
        Homography2D { h: out }.normalized()
    }

    /// Jacobian of the projective map at `p`, as `[[dxdx, dxdy], [dydx, dydy]]`.
    pub fn jacobian(&self, p: NormCoord) -> [[f64; 2]; 2] {
        let h = &self.h;
        let u = h[0] * p.x + h[1] * p.y + h[2];
        let v = h[3] * p.x + h[4] * p.y + h[5];
        let w = h[6] * p.x + h[7] * p.y + h[8];
        let w2 = w * w;
        [
            [(h[0] * w - u * h[6]) / w2, (h[1] * w - u * h[7]) / w2],
            [(h[3] * w - v * h[6]) / w2, (h[4] * w - v * h[7]) / w2],
        ]
    }
}

/// Either member of the stage-1 transform families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GlobalTransform {
    Affine(AffineTransform2D),
    Perspective(Homography2D),
}

impl From<AffineTransform2D> for GlobalTransform {
    fn from(a: AffineTransform2D) -> Self {
        GlobalTransform::Affine(a)
    }
}

impl From<Homography2D> for GlobalTransform {
    fn from(h: Homography2D) -> Self {
        GlobalTransform::Perspective(h)
    }
}

impl GlobalTransform {
    #[inline]
    pub fn apply(&self, p: NormCoord) -> NormCoord {
        match self {
            GlobalTransform::Affine(a) => a.apply(p),
            GlobalTransform::Perspective(h) => h.apply(p),
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        Ok(match self {
            GlobalTransform::Affine(a) => GlobalTransform::Affine(a.inverse()?),
            GlobalTransform::Perspective(h) => GlobalTransform::Perspective(h.inverse()?),
        })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &GlobalTransform) -> GlobalTransform {
        match (self, inner) {
            (GlobalTransform::Affine(a), GlobalTransform::Affine(b)) => {
                GlobalTransform::Affine(a.compose(b))
            }
            _ => GlobalTransform::Perspective(self.to_homography().compose(&inner.to_homography())),
        }
    }

    pub fn to_homography(&self) -> Homography2D {
        match self {
            GlobalTransform::Affine(a) => a.to_homography(),
            GlobalTransform::Perspective(h) => *h,
        }
    }

    pub fn as_affine(&self) -> Option<&AffineTransform2D> {
        match self {
            GlobalTransform::Affine(a) => Some(a),
            GlobalTransform::Perspective(_) => None,
        }
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse().is_ok()
    }

    /// Row-major coefficients for reporting: 6 for affine, 9 for perspective.
    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            GlobalTransform::Affine(a) => a.m.to_vec(),
            GlobalTransform::Perspective(h) => h.h.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_closed_form() {
        let a = AffineTransform2D::from_rows([2.0, 0.0, 0.1], [0.0, 1.0, -0.2]).unwrap();
        let inv = a.inverse().unwrap();
        let expect = AffineTransform2D::from_rows([0.5, 0.0, -0.05], [0.0, 1.0, 0.2]).unwrap();
        assert!(inv.max_abs_diff(&expect) < 1e-15);
        assert!(a.compose(&inv).max_abs_diff(&AffineTransform2D::IDENTITY) < 1e-10);
        assert_eq!(
            AffineTransform2D::IDENTITY.inverse().unwrap(),
            AffineTransform2D::IDENTITY
        );
    }

    #[test]
    fn singular_is_rejected() {
        let a = AffineTransform2D::from_rows([1.0, 1.0, 0.0], [1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(a.inverse(), Err(Error::SingularTransform(_))));
    }

    #[test]
    fn non_finite_entries_rejected() {
        assert!(AffineTransform2D::new([1.0, f64::NAN, 0.0, 0.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn homography_inverse_round_trip() {
        let h = Homography2D::new([1.1, 0.05, 0.02, -0.03, 0.9, 0.1, 0.05, -0.04, 1.0]).unwrap();
        let inv = h.inverse().unwrap();
        for p in [NormCoord::new(0.3, -0.7), NormCoord::new(-1.0, 1.0)] {
            let q = inv.apply(h.apply(p));
            assert!((q.x - p.x).abs() < 1e-12 && (q.y - p.y).abs() < 1e-12);
        }
    }

    #[test]
    fn homography_jacobian_matches_finite_differences() {
        let h = Homography2D::new([1.1, 0.05, 0.02, -0.03, 0.9, 0.1, 0.05, -0.04, 1.0]).unwrap();
        let p = NormCoord::new(0.2, 0.4);
        let j = h.jacobian(p);
        let eps = 1e-6;
        let dx = (h.apply(NormCoord::new(p.x + eps, p.y)) - h.apply(NormCoord::new(p.x - eps, p.y)))
            * (0.5 / eps);
        let dy = (h.apply(NormCoord::new(p.x, p.y + eps)) - h.apply(NormCoord::new(p.x, p.y - eps)))
            * (0.5 / eps);
        assert!((j[0][0] - dx.x).abs() < 1e-8 && (j[1][0] - dx.y).abs() < 1e-8);
        assert!((j[0][1] - dy.x).abs() < 1e-8 && (j[1][1] - dy.y).abs() < 1e-8);
    }
}
