use super::OpfError;

/// (row, col, value) entries; duplicates are summed.
pub type Triplets = Vec<(usize, usize, f64)>;

/// Function values and first derivatives at one point.
#[derive(Debug, Clone, Default)]
pub struct NlpEval {
    pub f: f64,
    pub grad: Vec<f64>,
    /// Equalities g(x) = 0.
    pub g: Vec<f64>,
    pub jac_g: Triplets,
    /// Inequalities h(x) ≤ 0.
    pub h: Vec<f64>,
    pub jac_h: Triplets,
}

/// Smooth problem: min f(x) s.t. g(x) = 0, h(x) ≤ 0, lo ≤ x ≤ hi.
/// Variables with lo == hi are held fixed by the solver.
pub trait Nlp {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn bounds(&self) -> (&[f64], &[f64]);
    fn initial_point(&self) -> Vec<f64>;

    /// Values only: (f, g, h).
    fn values(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), OpfError> {
        let e = self.eval(x)?;
        Ok((e.f, e.g, e.h))
    }

    fn eval(&self, x: &[f64]) -> Result<NlpEval, OpfError>;

    /// Hessian of σ f + λᵀ g + μᵀ h with both triangles present.
    fn hessian(&self, x: &[f64], sigma: f64, lambda: &[f64], mu: &[f64]) -> Result<Triplets, OpfError>;
}
