use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Input-affine system `ẋ = f(x) + g(x) u`.
pub trait Dynamics<S: Scalar>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn drift(&self, x: &[S]) -> Vec<S>;
    fn input_map(&self, x: &[S]) -> Mat<S>;

    fn rhs(&self, x: &[S], u: &[S]) -> Vec<S> {
        let mut dx = self.drift(x);
        for (d, v) in dx.iter_mut().zip(self.input_map(x).mul_vec(u)) {
            *d += v;
        }
        dx
    }
}

/// `ẋ = u`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleIntegrator {
    pub dim: usize,
}

impl<S: Scalar> Dynamics<S> for SingleIntegrator {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _x: &[S]) -> Vec<S> {
        vec![S::zero(); self.dim]
    }

    fn input_map(&self, _x: &[S]) -> Mat<S> {
        Mat::identity(self.dim)
    }
}

/// `ẋ = A x + B u`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<S> {
    pub a: Mat<S>,
    pub b: Mat<S>,
}

impl<S: Scalar> LinearSystem<S> {
    pub fn new(a: Mat<S>, b: Mat<S>) -> Option<Self> {
        (a.nrows() == a.ncols() && b.nrows() == a.nrows()).then_some(Self { a, b })
    }
}

impl<S: Scalar> Dynamics<S> for LinearSystem<S> {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn drift(&self, x: &[S]) -> Vec<S> {
        self.a.mul_vec(x)
    }

    fn input_map(&self, _x: &[S]) -> Mat<S> {
        self.b.clone()
    }
}

/// Team of three-wheeled omnidirectional robots with pairwise repulsion.
///
/// Agent `i` has state `[p_x, p_y, ρ]` and three wheel speeds as input:
/// `ẋᵢ = fᵢ(x) + Rot(ρᵢ) (Bᵀ)⁻¹ R uᵢ`, where the drift pushes agents apart with
/// `fᵢ,ₖ = Σⱼ kᵢ (xᵢ,ₖ − xⱼ,ₖ) / (‖pᵢ − pⱼ‖² + 1e-5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmniRobotTeam<S> {
    pub gains: Vec<S>,
    pub wheel_radius: S,
    pub body_radius: S,
    wheel_inv_t: Mat<S>,
}

pub const WHEEL_RADIUS: f64 = 0.02;
pub const BODY_RADIUS: f64 = 0.2;
const REPULSION_EPS: f64 = 1e-5;

impl<S: Scalar> OmniRobotTeam<S> {
    pub fn new(gains: Vec<S>) -> Self {
        Self::with_geometry(gains, S::lit(WHEEL_RADIUS), S::lit(BODY_RADIUS))
    }

    pub fn with_geometry(gains: Vec<S>, wheel_radius: S, body_radius: S) -> Self {
        let wheel_inv_t = Self::wheel_matrix(body_radius).transpose().inverse().expect("wheel matrix is invertible for L > 0");
        Self { gains, wheel_radius, body_radius, wheel_inv_t }
    }

    /// Wheel geometry matrix `B` for body radius `l`.
    pub fn wheel_matrix(l: S) -> Mat<S> {
        let c = S::lit((std::f64::consts::PI / 6.0).cos());
        let s = S::lit((std::f64::consts::PI / 6.0).sin());
        Mat::from_rows(&[vec![S::zero(), c, -c], vec![-S::one(), s, s], vec![l, l, l]])
    }

    pub fn agents(&self) -> usize {
        self.gains.len()
    }

    /// Position of agent `i`.
    pub fn position(x: &[S], i: usize) -> [S; 2] {
        [x[3 * i], x[3 * i + 1]]
    }
}

impl<S: Scalar> Dynamics<S> for OmniRobotTeam<S> {
    fn state_dim(&self) -> usize {
        3 * self.agents()
    }

    fn input_dim(&self) -> usize {
        3 * self.agents()
    }

    fn drift(&self, x: &[S]) -> Vec<S> {
        let n = self.agents();
        let mut f = vec![S::zero(); 3 * n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let dx = x[3 * i] - x[3 * j];
                let dy = x[3 * i + 1] - x[3 * j + 1];
                let denom = dx * dx + dy * dy + S::lit(REPULSION_EPS);
                f[3 * i] += self.gains[i] * dx / denom;
                f[3 * i + 1] += self.gains[i] * dy / denom;
            }
        }
        f
    }

    fn input_map(&self, x: &[S]) -> Mat<S> {
        let n = self.agents();
        let mut g = Mat::zeros(3 * n, 3 * n);
        for i in 0..n {
            let rho = x[3 * i + 2];
            let (s, c) = (rho.sin(), rho.cos());
            let rot = Mat::from_rows(&[vec![c, -s, S::zero()], vec![s, c, S::zero()], vec![S::zero(), S::zero(), S::one()]]);
            let block = rot.mul(&self.wheel_inv_t).scaled(self.wheel_radius);
            for r in 0..3 {
                for col in 0..3 {
                    g[(3 * i + r, 3 * i + col)] = block[(r, col)];
                }
            }
        }
        g
    }
}
