//! Time funnels added to a child barrier by `F` and `G` nodes.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaShape {
    /// Straight line through `(t1, gamma_zero)` and `(t_star, gamma_inf)`, never clamped.
    Affine,
    /// Line that levels off at `gamma_inf`. The corner at `t_star` is replaced
    /// by a parabola on `[t_star - blend, t_star + blend]`; `blend = 0` keeps the kink.
    Clamped { blend: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFn<S> {
    pub t1: S,
    pub gamma_zero: S,
    pub gamma_inf: S,
    pub t_star: S,
    pub shape: GammaShape,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GammaError {
    #[error("t_star ({t_star}) must exceed the start time ({t1})")]
    EmptyRamp { t1: f64, t_star: f64 },
    #[error("blend width {blend} must lie in [0, t_star - t1 = {span}]")]
    Blend { blend: f64, span: f64 },
    #[error("gamma parameters must be finite")]
    NonFinite,
}

impl<S: Scalar> GammaFn<S> {
    pub fn new(t1: S, gamma_zero: S, gamma_inf: S, t_star: S, shape: GammaShape) -> Result<Self, GammaError> {
        if ![t1, gamma_zero, gamma_inf, t_star].iter().all(|v| v.is_finite()) {
            return Err(GammaError::NonFinite);
        }
        if !(t_star > t1) {
            return Err(GammaError::EmptyRamp { t1: t1.as_f64(), t_star: t_star.as_f64() });
        }
        if let GammaShape::Clamped { blend } = shape {
            let span = (t_star - t1).as_f64();
            if !(0.0..=span).contains(&blend) {
                return Err(GammaError::Blend { blend, span });
            }
        }
        Ok(Self { t1, gamma_zero, gamma_inf, t_star, shape })
    }

    pub fn affine(t1: S, gamma_zero: S, gamma_inf: S, t_star: S) -> Result<Self, GammaError> {
        Self::new(t1, gamma_zero, gamma_inf, t_star, GammaShape::Affine)
    }

    /// Slope of the linear part.
    pub fn slope(&self) -> S {
        (self.gamma_inf - self.gamma_zero) / (self.t_star - self.t1)
    }

    fn blend(&self) -> Option<S> {
        match self.shape {
            GammaShape::Affine => None,
            GammaShape::Clamped { blend } => Some(S::lit(blend)),
        }
    }

    pub fn eval(&self, t: S) -> S {
        let s = self.slope();
        match self.blend() {
            None => self.gamma_zero + s * (t - self.t1),
            Some(w) => {
                let u = t - self.t_star;
                if u <= -w {
                    self.gamma_inf + s * u
                } else if u >= w {
                    self.gamma_inf
                } else {
                    self.gamma_inf - s * (u - w) * (u - w) / (S::lit(4.0) * w)
                }
            }
        }
    }

    fn deriv_inner(&self, t: S, from_left: bool) -> S {
        let s = self.slope();
        match self.blend() {
            None => s,
            Some(w) => {
                let u = t - self.t_star;
                let in_line = if from_left { u <= -w } else { u < -w };
                let in_flat = if from_left { u > w } else { u >= w };
                if in_line {
                    s
                } else if in_flat {
                    S::zero()
                } else {
                    -s * (u - w) / (S::lit(2.0) * w)
                }
            }
        }
    }

    pub fn deriv(&self, t: S) -> S {
        self.deriv_left(t)
    }

    /// One-sided derivatives; they differ only at the kink of a zero-width clamp.
    pub fn deriv_left(&self, t: S) -> S {
        self.deriv_inner(t, true)
    }

    pub fn deriv_right(&self, t: S) -> S {
        self.deriv_inner(t, false)
    }

    /// Whether the function is C¹ everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self.shape, GammaShape::Clamped { blend } if blend == 0.0)
    }

    /// First time `t ≥ t1` with `γ(t) ≤ 0`, if any.
    pub fn first_nonpositive(&self) -> Option<S> {
        if self.gamma_zero <= S::zero() {
            return Some(self.t1);
        }
        let s = self.slope();
        if s >= S::zero() {
            return None;
        }
        let linear = self.t1 - self.gamma_zero / s;
        match self.blend() {
            None => Some(linear),
            Some(w) => {
                if self.gamma_inf > S::zero() {
                    None
                } else if linear <= self.t_star - w {
                    Some(linear)
                } else {
                    Some(self.t_star + w - (S::lit(4.0) * w * self.gamma_inf / s).sqrt())
                }
            }
        }
    }

    /// Largest value of `-dγ/dt` on `[lo, hi]`.
    ///
    /// The derivative is monotone in `t`, so the extreme sits at an endpoint.
    pub fn max_decrease_rate(&self, lo: S, hi: S) -> S {
        [self.deriv_right(lo), self.deriv_left(lo), self.deriv_left(hi), self.deriv_right(hi)]
            .into_iter()
            .map(|d| -d)
            .fold(S::neg_infinity(), S::max)
    }
}
