//! Robust feedback synthesis over the mass / COM / failure polytope.
//!
//! Decision variables are `Q = Qᵀ` (12×12), `R` (4×12) and `S` (4×4); the
//! gains are recovered as `F = R Q⁻¹` and `G = S⁻¹`. The same block
//! functions are used to build the SDP (by evaluating them on basis
//! elements) and to verify a finished design, so the solver and the
//! checker cannot drift apart.

use std::fmt;

use cotrans_sdp::{InteriorPoint, IpmSettings, LmiBlock, Sdp, SdpBackend, SdpError, SparseSym};
use nalgebra::{Complex, DMatrix, DVector, Matrix4, SMatrix, SymmetricEigen, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::DesignError;
use crate::model::{feedthrough, LinearModel, OutputModel, QuadInput, StateMatrix};

pub type Gain = SMatrix<f64, 4, 12>;

/// Sector-and-strip region for the closed-loop poles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleRegion {
    /// Minimum decay rate, 1/s.
    pub tau1: f64,
    /// Maximum decay rate, 1/s.
    pub tau2: f64,
    /// Cone half-angle tangent: `|Im λ| < −τ₃ Re λ`.
    pub tau3: f64,
}

impl PoleRegion {
    pub fn validate(&self) -> Result<(), DesignError> {
        let finite = self.tau1.is_finite() && self.tau2.is_finite() && self.tau3.is_finite();
        if !finite || self.tau1 <= 0.0 || self.tau2 <= self.tau1 || self.tau3 <= 0.0 {
            return Err(DesignError::PoleRegion(format!(
                "need 0 < tau1 < tau2 and tau3 > 0, got tau1={}, tau2={}, tau3={}",
                self.tau1, self.tau2, self.tau3
            )));
        }
        Ok(())
    }

    pub fn contains(&self, ev: Complex<f64>) -> bool {
        ev.re < -self.tau1 && ev.re > -self.tau2 && ev.im.abs() < -self.tau3 * ev.re
    }
}

/// Which matrix enters the cone constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConeForm {
    /// `X = AQ − BR`, the closed-loop matrix used by the other two pole
    /// constraints.
    #[default]
    ClosedLoop,
    /// `X = AQ` with no input terms. `A` is nilpotent, so this block is
    /// singular along the left null space of `A` and never strictly feasible.
    OpenLoop,
}

/// Sign of the `RᵀDᵀ` term in the off-diagonal block of the SPR LMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSign {
    /// `QCᵀ − BSᵀ − RᵀDᵀ = Q(C − DF)ᵀ − BSᵀ`. Congruent to the Riccati form
    /// with output matrix `G(C − DF)`, i.e. the loop actually closed by `−Fξ`.
    #[default]
    ClosedLoop,
    /// `QCᵀ − BSᵀ + RᵀDᵀ`, which certifies the output `G(C + DF)` instead.
    Flipped,
}

/// Ranges of the uncertain parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBox {
    pub mass_range: [f64; 2],
    /// Extreme COM positions in the payload frame.
    pub com_vertices: Vec<Vector3<f64>>,
    /// Per quadrant: remaining thrust fraction at the two failure extremes.
    pub failure_coeffs: [[f64; 2]; 4],
}

impl UncertaintyBox {
    /// Box whose failure coefficients are `(1/nᵢ, 1)`.
    pub fn new(mass_range: [f64; 2], com_vertices: Vec<Vector3<f64>>, robot_counts: [usize; 4]) -> Self {
        Self {
            mass_range,
            com_vertices,
            failure_coeffs: robot_counts.map(|n| [1.0 / n.max(1) as f64, 1.0]),
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        let [m1, m2] = self.mass_range;
        if !(m1 > 0.0 && m1 <= m2 && m2.is_finite()) {
            return Err(DesignError::UncertaintyBox(format!("mass range [{m1}, {m2}]")));
        }
        if self.com_vertices.is_empty() || self.com_vertices.iter().any(|c| !c.iter().all(|v| v.is_finite())) {
            return Err(DesignError::UncertaintyBox(
                "COM vertices must be finite and nonempty".into(),
            ));
        }
        if self.failure_coeffs.iter().flatten().any(|b| !(*b > 0.0 && *b <= 1.0)) {
            return Err(DesignError::UncertaintyBox(
                "failure coefficients must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Lever arm `r_{i,l}` from COM vertex `l` to the representative point
    /// of quadrant `i`.
    pub fn lever(&self, model: &LinearModel, quadrant: usize, vertex: usize) -> Vector3<f64> {
        model.geometry.rep_points[quadrant] - self.com_vertices[vertex]
    }
}

/// Index of a polytope vertex: mass extreme, COM vertex, failure extreme per
/// quadrant (all zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VertexLabel {
    pub mass: usize,
    pub com: usize,
    pub failure: [usize; 4],
}

impl fmt::Display for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.failure.map(|k| k + 1);
        write!(f, "m{}-c{}-f{a}{b}{c}{d}", self.mass + 1, self.com + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub label: VertexLabel,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub failure: [f64; 4],
    /// Input matrix with the failure coefficients applied (not yet scaled
    /// by the robot counts).
    pub b: QuadInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    pub vertices: Vec<Vertex>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vertex> {
        self.vertices.iter()
    }

    /// Indices of the first occurrence of each distinct input matrix.
    ///
    /// Quadrants with a single robot have `1/nᵢ = 1`, so both failure
    /// extremes coincide; the duplicates add nothing to the LMI.
    pub fn distinct(&self) -> Vec<usize> {
        let mut keep: Vec<usize> = Vec::new();
        for (k, v) in self.vertices.iter().enumerate() {
            if !keep.iter().any(|&j| self.vertices[j].b == v.b) {
                keep.push(k);
            }
        }
        keep
    }
}

pub fn enumerate_vertices(model: &LinearModel, bx: &UncertaintyBox) -> Result<VertexSet, DesignError> {
    bx.validate()?;
    let geo = &model.geometry;
    let mut vertices = Vec::with_capacity(2 * bx.com_vertices.len() * 16);
    for (h, &mass) in bx.mass_range.iter().enumerate() {
        for (l, com) in bx.com_vertices.iter().enumerate() {
            let base = geo.input_matrix(mass, com);
            for code in 0..16usize {
                let failure_idx = [0, 1, 2, 3].map(|i| (code >> (3 - i)) & 1);
                let failure = [0, 1, 2, 3].map(|i| bx.failure_coeffs[i][failure_idx[i]]);
                let b = base * Matrix4::from_diagonal(&Vector4::from(failure));
                vertices.push(Vertex {
                    label: VertexLabel {
                        mass: h,
                        com: l,
                        failure: failure_idx,
                    },
                    mass,
                    com: *com,
                    failure,
                    b,
                });
            }
        }
    }
    Ok(VertexSet { vertices })
}

/// `diag(n₁, …, n₄)` applied to the columns of `b`.
pub fn decentralize(b: &QuadInput, counts: [usize; 4]) -> QuadInput {
    b * Matrix4::from_diagonal(&Vector4::from(counts.map(|n| n as f64)))
}

/// Values of the LMI decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVariables {
    pub q: StateMatrix,
    pub r: Gain,
    pub s: Matrix4<f64>,
}

impl DesignVariables {
    pub fn zeros() -> Self {
        Self {
            q: StateMatrix::zeros(),
            r: Gain::zeros(),
            s: Matrix4::zeros(),
        }
    }
}

fn closed_loop_product(b: &QuadInput, model: &LinearModel, v: &DesignVariables) -> StateMatrix {
    model.a * v.q - b * v.r
}

/// Left side of the SPR condition at one vertex; must be negative definite.
///
/// `out.d` is the feedthrough belonging to the same `b`.
pub fn assemble_spr_lmi(
    b: &QuadInput,
    model: &LinearModel,
    out: &OutputModel,
    v: &DesignVariables,
    sign: CouplingSign,
) -> DMatrix<f64> {
    let aq = closed_loop_product(b, model, v);
    let l11 = aq + aq.transpose();
    let rd = v.r.transpose() * out.d.transpose();
    let l12 = v.q * out.c.transpose() - b * v.s.transpose();
    let l12 = match sign {
        CouplingSign::ClosedLoop => l12 - rd,
        CouplingSign::Flipped => l12 + rd,
    };
    let l22 = -(out.d * v.s.transpose()) - v.s * out.d.transpose();
    let mut m = DMatrix::zeros(16, 16);
    m.view_mut((0, 0), (12, 12)).copy_from(&l11);
    m.view_mut((0, 12), (12, 4)).copy_from(&l12);
    m.view_mut((12, 0), (4, 12)).copy_from(&l12.transpose());
    m.view_mut((12, 12), (4, 4)).copy_from(&l22);
    m
}

/// The three pole-placement blocks of one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleBlocks {
    /// Must be negative definite.
    pub min_decay: DMatrix<f64>,
    /// Must be positive definite.
    pub max_decay: DMatrix<f64>,
    /// Must be negative definite.
    pub cone: DMatrix<f64>,
}

pub fn assemble_pole_constraints(
    b: &QuadInput,
    model: &LinearModel,
    region: &PoleRegion,
    cone: ConeForm,
    v: &DesignVariables,
) -> PoleBlocks {
    let aq = closed_loop_product(b, model, v);
    let l11 = aq + aq.transpose();
    let x = match cone {
        ConeForm::ClosedLoop => aq,
        ConeForm::OpenLoop => model.a * v.q,
    };
    let sym = (x + x.transpose()) * region.tau3;
    let skew = x - x.transpose();
    let mut c = DMatrix::zeros(24, 24);
    c.view_mut((0, 0), (12, 12)).copy_from(&sym);
    c.view_mut((0, 12), (12, 12)).copy_from(&skew);
    c.view_mut((12, 0), (12, 12)).copy_from(&skew.transpose());
    c.view_mut((12, 12), (12, 12)).copy_from(&sym);
    PoleBlocks {
        min_decay: DMatrix::from_iterator(12, 12, (l11 + v.q * (2.0 * region.tau1)).iter().copied()),
        max_decay: DMatrix::from_iterator(12, 12, (l11 + v.q * (2.0 * region.tau2)).iter().copied()),
        cone: c,
    }
}

/// Output model at a vertex: shared `C` and `D̂`, feedthrough rebuilt from
/// the vertex input matrix.
pub fn vertex_outputs(nominal: &OutputModel, b: &QuadInput) -> OutputModel {
    OutputModel {
        c: nominal.c,
        d: feedthrough(&nominal.d_hat, b),
        d_hat: nominal.d_hat,
    }
}

/// Synthesis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignOptions {
    /// Right-multiply every vertex by `diag(n₁..n₄)`.
    pub decentralize: bool,
    pub cone: ConeForm,
    pub coupling: CouplingSign,
    /// Strictness margin `ε`.
    pub margin: f64,
    /// After minimizing `κ`, the bound is relaxed to `(1 + slack)·κ*` and
    /// the remaining freedom is spent on maximizing the smallest margin.
    /// Zero keeps the minimum-`κ` solution.
    pub kappa_slack: f64,
    pub max_iterations: usize,
    /// Trace solver iterations to stderr.
    pub verbose: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            decentralize: true,
            cone: ConeForm::ClosedLoop,
            coupling: CouplingSign::ClosedLoop,
            margin: 1e-6,
            kappa_slack: 0.05,
            max_iterations: 150,
            verbose: false,
        }
    }
}

/// A synthesized robust feedback controller.
#[derive(Debug, Clone, PartialEq)]
pub struct RfcDesign {
    pub f: Gain,
    pub r: Gain,
    pub g: Matrix4<f64>,
    pub q: StateMatrix,
    pub s: Matrix4<f64>,
    pub kappa: f64,
    pub scaled: bool,
    pub robot_counts: [usize; 4],
    pub region: PoleRegion,
    pub cone: ConeForm,
    pub coupling: CouplingSign,
}

impl RfcDesign {
    pub fn variables(&self) -> DesignVariables {
        DesignVariables {
            q: self.q,
            r: self.r,
            s: self.s,
        }
    }

    /// Input matrix the gains were designed against.
    pub fn design_input(&self, b: &QuadInput) -> QuadInput {
        if self.scaled {
            decentralize(b, self.robot_counts)
        } else {
            *b
        }
    }
}

/// Variable layout of the synthesis SDP.
struct Layout {
    /// `(i, j)` with `i ≤ j` for each entry of `Q`.
    q_pairs: Vec<(usize, usize)>,
    kappa: Option<usize>,
    slack: Option<usize>,
}

const NQ: usize = 78;
const NR: usize = 48;
const NS: usize = 16;
const NBASE: usize = NQ + NR + NS;

impl Layout {
    fn new(kappa_var: bool, slack_var: bool) -> Self {
        let mut q_pairs = Vec::with_capacity(NQ);
        for j in 0..12 {
            for i in 0..=j {
                q_pairs.push((i, j));
            }
        }
        let mut next = NBASE;
        let mut take = |on: bool| {
            on.then(|| {
                next += 1;
                next - 1
            })
        };
        let kappa = take(kappa_var);
        let slack = take(slack_var);
        Self { q_pairs, kappa, slack }
    }

    fn nvars(&self) -> usize {
        NBASE + usize::from(self.kappa.is_some()) + usize::from(self.slack.is_some())
    }

    fn basis(&self, k: usize) -> DesignVariables {
        let mut v = DesignVariables::zeros();
        if k < NQ {
            let (i, j) = self.q_pairs[k];
            v.q[(i, j)] = 1.0;
            v.q[(j, i)] = 1.0;
        } else if k < NQ + NR {
            let e = k - NQ;
            v.r[(e / 12, e % 12)] = 1.0;
        } else {
            let e = k - NQ - NR;
            v.s[(e / 4, e % 4)] = 1.0;
        }
        v
    }

    fn unpack(&self, y: &DVector<f64>) -> DesignVariables {
        let mut v = DesignVariables::zeros();
        for (k, &(i, j)) in self.q_pairs.iter().enumerate() {
            v.q[(i, j)] = y[k];
            v.q[(j, i)] = y[k];
        }
        for e in 0..NR {
            v.r[(e / 12, e % 12)] = y[NQ + e];
        }
        for e in 0..NS {
            v.s[(e / 4, e % 4)] = y[NQ + NR + e];
        }
        v
    }
}

/// Orientation of a block constraint.
#[derive(Clone, Copy)]
enum Sense {
    /// `M ≺ 0`
    Negative,
    /// `M ≻ 0`
    Positive,
}

type MatrixFn = Box<dyn Fn(&DesignVariables) -> DMatrix<f64> + Sync>;

/// One linear matrix function of `(Q, R, S)` together with its required sign.
struct Constraint {
    label: String,
    sense: Sense,
    dim: usize,
    eval: MatrixFn,
}

impl Constraint {
    /// Distance from the boundary (positive when satisfied).
    fn margin(&self, v: &DesignVariables) -> f64 {
        let m = (self.eval)(v);
        let eig = SymmetricEigen::new(0.5 * (&m + m.transpose())).eigenvalues;
        match self.sense {
            Sense::Negative => -eig.max(),
            Sense::Positive => eig.min(),
        }
    }

    /// `±M(y) − shift·I ⪰ 0` as an SDP block; `shift` is either a fixed
    /// margin or the slack variable. `M` may be affine.
    fn block(&self, layout: &Layout, shift: Shift) -> LmiBlock {
        let sign = match self.sense {
            Sense::Negative => -1.0,
            Sense::Positive => 1.0,
        };
        let offset = (self.eval)(&DesignVariables::zeros());
        let mut constant = &offset * sign;
        let mut terms = Vec::with_capacity(NBASE + 1);
        for k in 0..NBASE {
            let m = ((self.eval)(&layout.basis(k)) - &offset) * sign;
            terms.push((k, SparseSym::from_dense(&m, 0.0)));
        }
        match shift {
            Shift::Fixed(eps) => {
                for i in 0..self.dim {
                    constant[(i, i)] -= eps;
                }
            }
            Shift::Slack => {
                let idx = layout.slack.expect("slack variable");
                terms.push((idx, SparseSym::identity(self.dim).scaled(-1.0)));
            }
        }
        let mut block = LmiBlock::new(self.label.clone(), constant);
        for (k, c) in terms {
            block.push_term(k, c);
        }
        block
    }
}

#[derive(Clone, Copy)]
enum Shift {
    Fixed(f64),
    Slack,
}

/// Every vertex-dependent constraint of the synthesis problem.
fn vertex_constraints(
    vertices: &VertexSet,
    model: &LinearModel,
    outputs: &OutputModel,
    region: &PoleRegion,
    options: &DesignOptions,
) -> Vec<Constraint> {
    let counts = model.robot_counts;
    let mut out = Vec::new();
    let mut open_loop_cone_done = false;
    for k in vertices.distinct() {
        let vx = &vertices.vertices[k];
        let b = if options.decentralize {
            decentralize(&vx.b, counts)
        } else {
            vx.b
        };
        let om = vertex_outputs(outputs, &b);
        let label = vx.label.to_string();
        let (m1, m2, m3) = (model.clone(), model.clone(), model.clone());
        let r1 = *region;
        let r2 = *region;
        let sign = options.coupling;
        out.push(Constraint {
            label: format!("{label}/spr"),
            sense: Sense::Negative,
            dim: 16,
            eval: Box::new(move |v| assemble_spr_lmi(&b, &m1, &om, v, sign)),
        });
        out.push(Constraint {
            label: format!("{label}/min-decay"),
            sense: Sense::Negative,
            dim: 12,
            eval: Box::new(move |v| {
                let aq = closed_loop_product(&b, &m2, v);
                let m = aq + aq.transpose() + v.q * (2.0 * r1.tau1);
                DMatrix::from_iterator(12, 12, m.iter().copied())
            }),
        });
        out.push(Constraint {
            label: format!("{label}/max-decay"),
            sense: Sense::Positive,
            dim: 12,
            eval: Box::new(move |v| {
                let aq = closed_loop_product(&b, &m3, v);
                let m = aq + aq.transpose() + v.q * (2.0 * r2.tau2);
                DMatrix::from_iterator(12, 12, m.iter().copied())
            }),
        });
        if options.cone == ConeForm::OpenLoop && open_loop_cone_done {
            continue;
        }
        open_loop_cone_done = true;
        let m4 = model.clone();
        let r3 = *region;
        let cone = options.cone;
        let cone_label = match cone {
            ConeForm::ClosedLoop => format!("{label}/cone"),
            ConeForm::OpenLoop => "cone".to_string(),
        };
        out.push(Constraint {
            label: cone_label,
            sense: Sense::Negative,
            dim: 24,
            eval: Box::new(move |v| assemble_pole_constraints(&b, &m4, &r3, cone, v).cone),
        });
    }
    out
}

/// `Q − I ≻ 0`.
fn lower_bound_q() -> Constraint {
    Constraint {
        label: "Q>I".into(),
        sense: Sense::Positive,
        dim: 12,
        eval: Box::new(|v| {
            let m = v.q - StateMatrix::identity();
            DMatrix::from_iterator(12, 12, m.iter().copied())
        }),
    }
}

/// Builds `[[κ²I, Rᵀ], [R, I]] ⪰ shift·I` (with `κ²` fixed or variable).
fn kappa_block(layout: &Layout, kappa_sq: Option<f64>, shift: Shift) -> LmiBlock {
    let mut constant = DMatrix::zeros(16, 16);
    for i in 12..16 {
        constant[(i, i)] = 1.0;
    }
    if let Some(t) = kappa_sq {
        for i in 0..12 {
            constant[(i, i)] = t;
        }
    }
    if let Shift::Fixed(eps) = shift {
        for i in 0..16 {
            constant[(i, i)] -= eps;
        }
    }
    let mut block = LmiBlock::new("kappa", constant);
    for e in 0..NR {
        let (row, col) = (e / 12, e % 12);
        let mut m = DMatrix::zeros(16, 16);
        m[(12 + row, col)] = 1.0;
        m[(col, 12 + row)] = 1.0;
        block.push_term(NQ + e, SparseSym::from_dense(&m, 0.0));
    }
    if let Some(idx) = layout.kappa {
        let mut m = DMatrix::zeros(16, 16);
        for i in 0..12 {
            m[(i, i)] = 1.0;
        }
        block.push_term(idx, SparseSym::from_dense(&m, 0.0));
    }
    if let Shift::Slack = shift {
        let idx = layout.slack.expect("slack variable");
        block.push_term(idx, SparseSym::identity(16).scaled(-1.0));
    }
    block
}

/// `β I − Q ⪰ 0` and `[[σI, S], [Sᵀ, σI]] ⪰ 0`, keeping margin maximization
/// bounded.
fn box_blocks(beta: f64) -> Vec<LmiBlock> {
    let mut upper_q = LmiBlock::new("Q<beta", DMatrix::identity(12, 12) * beta);
    let layout = Layout::new(false, false);
    for k in 0..NQ {
        let m = -DMatrix::from_iterator(12, 12, layout.basis(k).q.iter().copied());
        upper_q.push_term(k, SparseSym::from_dense(&m, 0.0));
    }
    let mut bound_s = LmiBlock::new("S-norm", DMatrix::identity(8, 8) * beta);
    for e in 0..NS {
        let (row, col) = (e / 4, e % 4);
        let mut m = DMatrix::zeros(8, 8);
        m[(row, 4 + col)] = 1.0;
        m[(4 + col, row)] = 1.0;
        bound_s.push_term(NQ + NR + e, SparseSym::from_dense(&m, 0.0));
    }
    vec![upper_q, bound_s]
}

fn solver(options: &DesignOptions, target: Option<f64>) -> InteriorPoint {
    InteriorPoint::new(IpmSettings {
        max_iterations: options.max_iterations,
        objective_target: target,
        verbose: options.verbose,
        ..IpmSettings::default()
    })
}

/// Smallest margin over a constraint list and the label where it occurs.
fn worst_margin(constraints: &[Constraint], v: &DesignVariables) -> (String, f64) {
    constraints
        .iter()
        .map(|c| (c.label.clone(), c.margin(v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or_else(|| ("none".into(), f64::INFINITY))
}

/// Maximizes a common margin with `κ²` fixed at `kappa_sq` and
/// `Q ⪯ βI`, `‖S‖ ≤ β`.
fn maximize_margin(
    constraints: &[Constraint],
    kappa_sq: f64,
    beta: f64,
    options: &DesignOptions,
    target: Option<f64>,
) -> Result<(DesignVariables, f64), SdpError> {
    let layout = Layout::new(false, true);
    let slack = layout.slack.expect("slack variable");
    let mut sdp = Sdp::new(layout.nvars());
    for c in constraints {
        sdp.add_block(c.block(&layout, Shift::Slack))?;
    }
    sdp.add_block(kappa_block(&layout, Some(kappa_sq), Shift::Slack))?;
    for b in box_blocks(beta) {
        sdp.add_block(b)?;
    }
    let mut obj = DVector::zeros(layout.nvars());
    obj[slack] = 1.0;
    sdp.set_objective(obj);
    let sol = solver(options, target).solve(&sdp)?;
    Ok((layout.unpack(&sol.y), sol.y[slack]))
}

/// Minimizes `κ²` with every constraint held at margin `eps`.
fn minimize_kappa(
    constraints: &[Constraint],
    eps: f64,
    options: &DesignOptions,
) -> Result<(DesignVariables, f64), SdpError> {
    let layout = Layout::new(true, false);
    let kappa = layout.kappa.expect("kappa variable");
    let mut sdp = Sdp::new(layout.nvars());
    for c in constraints {
        sdp.add_block(c.block(&layout, Shift::Fixed(eps)))?;
    }
    sdp.add_block(kappa_block(&layout, None, Shift::Fixed(eps)))?;
    let mut obj = DVector::zeros(layout.nvars());
    obj[kappa] = -1.0;
    sdp.set_objective(obj);
    let sol = solver(options, None).solve(&sdp)?;
    Ok((layout.unpack(&sol.y), sol.y[kappa]))
}

/// Feasibility search used to explain a failed synthesis.
fn diagnose(constraints: &[Constraint], options: &DesignOptions) -> DesignError {
    const KAPPA_SQ_CAP: f64 = 1e8;
    const BETA_CAP: f64 = 1e4;
    match maximize_margin(
        constraints,
        KAPPA_SQ_CAP,
        BETA_CAP,
        options,
        Some(10.0 * options.margin),
    ) {
        Ok((v, _)) => {
            let (worst, margin) = worst_margin(constraints, &v);
            DesignError::Infeasible {
                worst,
                margin,
                required: options.margin,
            }
        }
        Err(source) => DesignError::Solver {
            phase: "feasibility diagnosis",
            source,
        },
    }
}

pub fn solve_design(
    vertices: &VertexSet,
    model: &LinearModel,
    outputs: &OutputModel,
    region: &PoleRegion,
    options: &DesignOptions,
) -> Result<RfcDesign, DesignError> {
    region.validate()?;
    if vertices.is_empty() {
        return Err(DesignError::UncertaintyBox("no vertices".into()));
    }
    let eps = options.margin;
    let constraints = synthesis_constraints(vertices, model, outputs, region, options);

    // Solve with a doubled margin so the certificate below has room.
    let (v_min, t_min) = match minimize_kappa(&constraints, 2.0 * eps, options) {
        Ok(r) => r,
        Err(SdpError::Infeasible { .. }) | Err(SdpError::Stalled { .. }) => {
            return Err(diagnose(&constraints, options))
        }
        Err(source) => {
            return Err(DesignError::Solver {
                phase: "kappa minimization",
                source,
            })
        }
    };

    let mut best = (v_min.clone(), t_min);
    if options.kappa_slack > 0.0 {
        let t_fixed = t_min * (1.0 + options.kappa_slack).powi(2);
        let beta = (10.0 * v_min.q.symmetric_eigenvalues().max()).max(10.0 * v_min.s.norm());
        if let Ok((v_c, _)) = maximize_margin(&constraints, t_fixed, beta, options, None) {
            let (_, m_c) = worst_margin(&constraints, &v_c);
            let (_, m_min) = worst_margin(&constraints, &v_min);
            let r_ok = v_c.r.singular_values().max() < t_fixed.sqrt();
            if m_c >= m_min && r_ok {
                best = (v_c, t_fixed);
            }
        }
    }
    let (v, t) = best;
    let (worst, margin) = worst_margin(&constraints, &v);
    if margin < eps {
        return Err(DesignError::Certification { worst, margin });
    }
    let kappa = t.sqrt();
    let r_norm = v.r.singular_values().max();
    if r_norm >= kappa {
        return Err(DesignError::Certification {
            worst: "kappa".into(),
            margin: kappa - r_norm,
        });
    }

    let q_inv =
        v.q.cholesky()
            .ok_or_else(|| DesignError::Certification {
                worst: "Q>I".into(),
                margin: f64::NAN,
            })?
            .inverse();
    let g = v.s.try_inverse().ok_or_else(|| DesignError::Certification {
        worst: "S invertible".into(),
        margin: 0.0,
    })?;
    Ok(RfcDesign {
        f: v.r * q_inv,
        r: v.r,
        g,
        q: v.q,
        s: v.s,
        kappa,
        scaled: options.decentralize,
        robot_counts: model.robot_counts,
        region: *region,
        cone: options.cone,
        coupling: options.coupling,
    })
}

fn synthesis_constraints(
    vertices: &VertexSet,
    model: &LinearModel,
    outputs: &OutputModel,
    region: &PoleRegion,
    options: &DesignOptions,
) -> Vec<Constraint> {
    let mut constraints = vertex_constraints(vertices, model, outputs, region, options);
    constraints.push(lower_bound_q());
    constraints
}

/// Outcome of checking one vertex against a finished design.
#[derive(Debug, Clone)]
pub struct SprReport {
    pub label: String,
    /// Smallest eigenvalue of `GD + (GD)ᵀ` (must be positive).
    pub feedthrough_min_eig: f64,
    /// Largest eigenvalue of the Riccati-form SPR inequality (must be negative).
    pub riccati_max_eig: f64,
    /// Distance of the LMI block from the boundary (must be at least the margin).
    pub lmi_margin: f64,
    pub min_decay_margin: f64,
    pub max_decay_margin: f64,
    pub cone_margin: f64,
    pub closed_loop_eigenvalues: Vec<Complex<f64>>,
    /// All closed-loop eigenvalues inside the pole region.
    pub poles_in_region: bool,
    pub pass: bool,
}

impl SprReport {
    pub fn worst_margin(&self) -> f64 {
        self.lmi_margin
            .min(self.min_decay_margin)
            .min(self.max_decay_margin)
            .min(self.cone_margin)
    }
}

fn sym_eigs(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(0.5 * (m + m.transpose())).eigenvalues
}

/// Checks the SPR and pole-region conditions for one vertex input matrix
/// (failure coefficients applied, count scaling not yet applied).
pub fn verify_spr(
    design: &RfcDesign,
    vertex_b: &QuadInput,
    model: &LinearModel,
    outputs: &OutputModel,
    margin: f64,
    label: impl Into<String>,
) -> SprReport {
    let b = design.design_input(vertex_b);
    let om = vertex_outputs(outputs, &b);
    let v = design.variables();

    let gd = design.g * om.d;
    let gd_sym = gd + gd.transpose();
    let feedthrough_min_eig = gd_sym.symmetric_eigenvalues().min();

    let ac = model.a - b * design.f;
    let riccati_max_eig = match (v.q.cholesky(), gd_sym.try_inverse()) {
        (Some(chol), Some(w)) if feedthrough_min_eig > 0.0 => {
            let p = chol.inverse();
            let co = design.g * (om.c - om.d * design.f);
            let cross = p * b - co.transpose();
            let ric = ac.transpose() * p + p * ac + cross * w * cross.transpose();
            let ric = DMatrix::from_iterator(12, 12, ric.iter().copied());
            sym_eigs(&ric).max()
        }
        _ => f64::INFINITY,
    };

    let lmi_margin = -sym_eigs(&assemble_spr_lmi(&b, model, &om, &v, design.coupling)).max();
    let pole = assemble_pole_constraints(&b, model, &design.region, design.cone, &v);
    let min_decay_margin = -sym_eigs(&pole.min_decay).max();
    let max_decay_margin = sym_eigs(&pole.max_decay).min();
    let cone_margin = -sym_eigs(&pole.cone).max();

    let closed_loop_eigenvalues: Vec<Complex<f64>> = ac.complex_eigenvalues().iter().copied().collect();
    let poles_in_region = closed_loop_eigenvalues.iter().all(|&ev| design.region.contains(ev));

    let mut report = SprReport {
        label: label.into(),
        feedthrough_min_eig,
        riccati_max_eig,
        lmi_margin,
        min_decay_margin,
        max_decay_margin,
        cone_margin,
        closed_loop_eigenvalues,
        poles_in_region,
        pass: false,
    };
    report.pass =
        feedthrough_min_eig > 0.0 && riccati_max_eig < 0.0 && report.worst_margin() >= margin && poles_in_region;
    report
}

/// [`verify_spr`] over every vertex of a set.
pub fn verify_all(
    design: &RfcDesign,
    vertices: &VertexSet,
    model: &LinearModel,
    outputs: &OutputModel,
    margin: f64,
) -> Vec<SprReport> {
    vertices
        .iter()
        .map(|vx| verify_spr(design, &vx.b, model, outputs, margin, vx.label.to_string()))
        .collect()
}
