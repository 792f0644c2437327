use super::model::OpfLayout;
use super::nlp::Triplets;

/// A user variable appended after the network variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtVar {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub init: f64,
    pub cost_linear: f64,
    pub cost_quadratic: f64,
}

/// One constraint value with its gradient over full variable indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtRow {
    pub value: f64,
    pub grad: Vec<(usize, f64)>,
}

/// User variables and constraints added to an OPF. Callbacks must be pure
/// functions of `x` and produce the same number of rows at every point.
/// Constraints without a `hessian` override are treated as linear.
pub trait OpfExtension {
    fn name(&self) -> &str;

    fn variables(&self, layout: &OpfLayout) -> Vec<ExtVar>;

    /// Lets the extension widen or tighten network variable bounds.
    fn adjust_bounds(&self, _layout: &OpfLayout, _lo: &mut [f64], _hi: &mut [f64]) {}

    /// Appends equality rows (= 0) and inequality rows (≤ 0). The
    /// extension's own variables start at `first_var`.
    fn eval(&self, layout: &OpfLayout, first_var: usize, x: &[f64], eq: &mut Vec<ExtRow>, ineq: &mut Vec<ExtRow>);

    /// Adds the Hessian of λᵀ eq + μᵀ ineq (both triangles).
    fn hessian(
        &self,
        _layout: &OpfLayout,
        _first_var: usize,
        _x: &[f64],
        _lambda: &[f64],
        _mu: &[f64],
        _out: &mut Triplets,
    ) {
    }
}

/// Soft voltage bounds: each node with a finite magnitude bound gets a
/// slack σ ≥ 0 penalised linearly, with v ≤ v_max + σ and v ≥ v_min − σ.
/// The hard magnitude bounds of those nodes are removed.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSlack {
    pub weight: f64,
}

impl VoltageSlack {
    pub fn new(weight: f64) -> Self {
        VoltageSlack { weight }
    }

    pub fn constrained_nodes(layout: &OpfLayout) -> Vec<usize> {
        (0..layout.n_nodes()).filter(|&i| layout.v_min[i] > 0.0 || layout.v_max[i].is_finite()).collect()
    }
}

impl OpfExtension for VoltageSlack {
    fn name(&self) -> &str {
        "voltage_slack"
    }

    fn variables(&self, layout: &OpfLayout) -> Vec<ExtVar> {
        Self::constrained_nodes(layout)
            .into_iter()
            .map(|i| {
                let node = layout.nodes.node(i);
                ExtVar {
                    name: format!("{}.{}", node.bus, node.phase),
                    lo: 0.0,
                    hi: f64::INFINITY,
                    init: 0.0,
                    cost_linear: self.weight,
                    cost_quadratic: 0.0,
                }
            })
            .collect()
    }

    fn adjust_bounds(&self, layout: &OpfLayout, lo: &mut [f64], hi: &mut [f64]) {
        for i in Self::constrained_nodes(layout) {
            let k = layout.v(i);
            // pinned magnitudes stay pinned
            if lo[k] < hi[k] {
                lo[k] = 0.0;
                hi[k] = f64::INFINITY;
            }
        }
    }

    fn eval(&self, layout: &OpfLayout, first_var: usize, x: &[f64], _eq: &mut Vec<ExtRow>, ineq: &mut Vec<ExtRow>) {
        for (s, i) in Self::constrained_nodes(layout).into_iter().enumerate() {
            let (k, sk) = (layout.v(i), first_var + s);
            if layout.v_max[i].is_finite() {
                ineq.push(ExtRow { value: x[k] - layout.v_max[i] - x[sk], grad: vec![(k, 1.0), (sk, -1.0)] });
            }
            if layout.v_min[i] > 0.0 {
                ineq.push(ExtRow { value: layout.v_min[i] - x[k] - x[sk], grad: vec![(k, -1.0), (sk, -1.0)] });
            }
        }
    }
}
