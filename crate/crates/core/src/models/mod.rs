//! The ten learnable dynamics models.
//!
//! A [`Model`] is the wiring (which networks feed which mechanics operator)
//! and a flat parameter layout; the parameters themselves live in a separate
//! vector so the same model can be evaluated with plain floats or with tape
//! variables during training.
//!
//! Every model has a *data chart* (what trajectories are recorded in) and a
//! *native chart* (what its vector field acts on). They differ only for the
//! Hamiltonian models, whose native state carries momenta `p = M_θ(q) q̇`.

mod checkpoint;
mod parts;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta};
pub use parts::{AngleEmbedding, BlockLayout, CholeskyMassHead, LearnableBlockMass};

use crate::diffcore::{dot, init_rng, BlockEntry, Dual, Mlp, MlpArch, NetworkEntry, ParamsHeader, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::mechanics::{
    constrained_hamiltonian_field, constrained_lagrangian_accel, euler_lagrange_accel, hamiltonian_field,
    structured_hamiltonian_field, structured_lagrangian_accel, Chart, Hamiltonian, Lagrangian, MassMatrix,
    Potential, System,
};
use crate::odeint::rollout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "HNN")]
    Hnn,
    #[serde(rename = "HNN-Structure")]
    HnnStructure,
    #[serde(rename = "HNN-Angle")]
    HnnAngle,
    #[serde(rename = "HNN-Structure-Angle")]
    HnnStructureAngle,
    #[serde(rename = "LNN")]
    Lnn,
    #[serde(rename = "LNN-Structure")]
    LnnStructure,
    #[serde(rename = "LNN-Angle")]
    LnnAngle,
    #[serde(rename = "LNN-Structure-Angle")]
    LnnStructureAngle,
    #[serde(rename = "CHNN")]
    Chnn,
    #[serde(rename = "CLNN")]
    Clnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Hnn,
        ModelKind::HnnStructure,
        ModelKind::HnnAngle,
        ModelKind::HnnStructureAngle,
        ModelKind::Lnn,
        ModelKind::LnnStructure,
        ModelKind::LnnAngle,
        ModelKind::LnnStructureAngle,
        ModelKind::Chnn,
        ModelKind::Clnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hnn => "HNN",
            ModelKind::HnnStructure => "HNN-Structure",
            ModelKind::HnnAngle => "HNN-Angle",
            ModelKind::HnnStructureAngle => "HNN-Structure-Angle",
            ModelKind::Lnn => "LNN",
            ModelKind::LnnStructure => "LNN-Structure",
            ModelKind::LnnAngle => "LNN-Angle",
            ModelKind::LnnStructureAngle => "LNN-Structure-Angle",
            ModelKind::Chnn => "CHNN",
            ModelKind::Clnn => "CLNN",
        }
    }

    pub fn is_hamiltonian(self) -> bool {
        matches!(
            self,
            ModelKind::Hnn
                | ModelKind::HnnStructure
                | ModelKind::HnnAngle
                | ModelKind::HnnStructureAngle
                | ModelKind::Chnn
        )
    }

    /// Explicit constraints in Cartesian coordinates.
    pub fn is_constrained(self) -> bool {
        matches!(self, ModelKind::Chnn | ModelKind::Clnn)
    }

    pub fn uses_angles(self) -> bool {
        matches!(
            self,
            ModelKind::HnnAngle | ModelKind::HnnStructureAngle | ModelKind::LnnAngle | ModelKind::LnnStructureAngle
        )
    }

    /// Separate mass matrix and potential.
    pub fn is_structured(self) -> bool {
        !matches!(self, ModelKind::Hnn | ModelKind::HnnAngle | ModelKind::Lnn | ModelKind::LnnAngle)
    }

    /// Chart the training and test trajectories are recorded in.
    pub fn data_chart(self) -> Chart {
        if self.is_constrained() {
            Chart::Cartesian
        } else {
            Chart::Generalized
        }
    }

    /// The implicit-constraint models a constrained model is compared with.
    pub fn counterparts(self) -> &'static [ModelKind] {
        match self {
            ModelKind::Chnn => &[ModelKind::Hnn, ModelKind::HnnStructure, ModelKind::HnnAngle, ModelKind::HnnStructureAngle],
            ModelKind::Clnn => &[ModelKind::Lnn, ModelKind::LnnStructure, ModelKind::LnnAngle, ModelKind::LnnStructureAngle],
            _ => &[],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHyper {
    /// Hidden layer widths shared by every network of the model.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Diagonal shift of the Cholesky mass head.
    #[serde(default = "default_eps")]
    pub mass_eps: f64,
    /// Seed for parameter initialisation.
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256, 256]
}

fn default_eps() -> f64 {
    0.1
}

impl Default for ModelHyper {
    fn default() -> Self {
        ModelHyper { hidden: default_hidden(), mass_eps: default_eps(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum MassPart {
    Head(CholeskyMassHead),
    Block(LearnableBlockMass),
    /// The system's own `M(q)`; only used to check model wiring.
    Analytic,
    None,
}

#[derive(Debug, Clone, PartialEq)]
enum ScalarPart {
    /// A network producing `H(q,p)`, `L(q,q̇)` or `V(·)` depending on the kind.
    Net(Mlp),
    /// The system's own potential in the model's chart.
    AnalyticPotential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    system: System,
    hyper: ModelHyper,
    embed: AngleEmbedding,
    mass: MassPart,
    scalar: ScalarPart,
    num_params: usize,
}

impl Model {
    pub fn new(kind: ModelKind, system: System, hyper: ModelHyper) -> Result<Self> {
        let n = system.dof();
        let mask = system.angular_mask();
        if kind.uses_angles() && !mask.iter().any(|&a| a) {
            return Err(Error::Config(format!("{kind} needs angular coordinates, {} has none", system.name())));
        }
        if hyper.mass_eps < 0.0 || !hyper.mass_eps.is_finite() {
            return Err(Error::Config("mass_eps must be non-negative".into()));
        }
        if hyper.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let embed = if kind.uses_angles() { AngleEmbedding::new(mask) } else { AngleEmbedding::identity(n) };
        let f = embed.output_dim();
        let mut offset = 0;
        let mut net = |input: usize, output: usize| {
            let m = Mlp::new(MlpArch::new(input, &hyper.hidden, output), offset);
            offset += m.num_params();
            m
        };
        let (mass, scalar) = if kind.is_constrained() {
            let v = net(system.cartesian_dim(), 1);
            let block = LearnableBlockMass::for_system(&system, offset);
            offset += block.len();
            (MassPart::Block(block), ScalarPart::Net(v))
        } else {
            let scalar_input = if kind.is_structured() { f } else { f + n };
            let s = net(scalar_input, 1);
            let mass = if kind.is_hamiltonian() || kind.is_structured() {
                let head = net(f, CholeskyMassHead::outputs(n));
                MassPart::Head(CholeskyMassHead { net: head, dim: n, eps: hyper.mass_eps })
            } else {
                MassPart::None
            };
            (mass, ScalarPart::Net(s))
        };
        Ok(Model { kind, system, hyper, embed, mass, scalar, num_params: offset })
    }

    /// A structured model whose mass and potential are the system's own,
    /// with no networks. Used to check that each wiring reproduces the
    /// ground truth; returns the parameter vector to evaluate it with.
    pub fn with_true_parts(kind: ModelKind, system: System) -> Result<(Self, Vec<f64>)> {
        if !kind.is_structured() {
            return Err(Error::Config(format!("{kind} has no separate mass and potential")));
        }
        let n = system.dof();
        let (mass, params) = if kind.is_constrained() {
            let block = LearnableBlockMass::for_system(&system, 0);
            let p = block.truth(&system);
            (MassPart::Block(block), p)
        } else {
            (MassPart::Analytic, Vec::new())
        };
        let embed = if kind.uses_angles() { AngleEmbedding::new(system.angular_mask()) } else { AngleEmbedding::identity(n) };
        let num_params = params.len();
        let model = Model {
            kind,
            system,
            hyper: ModelHyper::default(),
            embed,
            mass,
            scalar: ScalarPart::AnalyticPotential,
            num_params,
        };
        Ok((model, params))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn hyper(&self) -> &ModelHyper {
        &self.hyper
    }

    pub fn embedding(&self) -> &AngleEmbedding {
        &self.embed
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn data_chart(&self) -> Chart {
        self.kind.data_chart()
    }

    /// Length of a state vector (either chart; both have the same size).
    pub fn state_dim(&self) -> usize {
        self.system.state_dim(self.data_chart())
    }

    /// Networks as `(role, net)`.
    pub fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        let mut out = Vec::new();
        if let ScalarPart::Net(m) = &self.scalar {
            let role = match self.kind {
                ModelKind::Hnn | ModelKind::HnnAngle => "hamiltonian",
                ModelKind::Lnn | ModelKind::LnnAngle => "lagrangian",
                _ => "potential",
            };
            out.push((role, m));
        }
        if let MassPart::Head(h) = &self.mass {
            out.push(("mass_head", &h.net));
        }
        out
    }

    pub fn mass_block(&self) -> Option<&LearnableBlockMass> {
        match &self.mass {
            MassPart::Block(b) => Some(b),
            _ => None,
        }
    }

    pub fn mass_head(&self) -> Option<&CholeskyMassHead> {
        match &self.mass {
            MassPart::Head(h) => Some(h),
            _ => None,
        }
    }

    /// Deterministic initial parameters from `hyper.seed`. The final layer of
    /// every energy network (`V` or `H`) starts at zero.
    pub fn init_params(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.num_params];
        for (k, (role, net)) in self.networks().into_iter().enumerate() {
            let mut rng = init_rng(self.hyper.seed, k as u64);
            let zero_last = role == "potential" || role == "hamiltonian";
            net.init(&mut p, &mut rng, zero_last);
        }
        if let MassPart::Block(b) = &self.mass {
            let mut rng = init_rng(self.hyper.seed, 100);
            b.init(&mut p, &mut rng);
        }
        p
    }

    /// Layout description written in front of saved parameters.
    pub fn params_header(&self) -> ParamsHeader {
        let mut h = ParamsHeader::new(self.num_params);
        h.networks = self
            .networks()
            .into_iter()
            .map(|(role, m)| NetworkEntry { name: role.to_string(), offset: m.offset, arch: m.arch.clone() })
            .collect();
        if let MassPart::Block(b) = &self.mass {
            h.blocks.push(BlockEntry { name: "log_mass".into(), offset: b.offset, len: b.len() });
        }
        h
    }

    fn view<'a, L: Scalar>(&'a self, params: &'a [L]) -> Result<View<'a, L>> {
        if params.len() != self.num_params {
            return Err(Error::Shape(format!(
                "{} expects {} parameters, got {}",
                self.kind,
                self.num_params,
                params.len()
            )));
        }
        Ok(View { model: self, params })
    }

    fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            e @ (Error::Shape(_) | Error::Config(_)) => e,
            e => Error::InModel { kind: self.kind.name().to_string(), source: Box::new(e) },
        })
    }

    fn check_state<S>(&self, s: &[S]) -> Result<usize> {
        let d = self.state_dim();
        if s.len() != d {
            return Err(Error::Shape(format!("{} state has length {}, expected {d}", self.kind, s.len())));
        }
        Ok(d / 2)
    }

    /// Mass matrix at a configuration in the model's own chart.
    pub fn mass_matrix<S: Scalar>(&self, params: &[S::Leaf], q: &[S]) -> Result<Mat<S>> {
        let v = self.view(params)?;
        self.wrap(v.mass(q))
    }

    /// `f_θ(s)` on the native state.
    pub fn field<S: Scalar>(&self, params: &[S::Leaf], s: &[S]) -> Result<Vec<S>> {
        let n = self.check_state(s)?;
        let v = self.view(params)?;
        let (a, b) = s.split_at(n);
        let out = match self.kind {
            ModelKind::Hnn | ModelKind::HnnAngle => hamiltonian_field(&v, a, b),
            ModelKind::HnnStructure | ModelKind::HnnStructureAngle => structured_hamiltonian_field(&v, &v, a, b),
            ModelKind::Lnn | ModelKind::LnnAngle => euler_lagrange_accel(&v, a, b).map(|acc| cat(b, acc)),
            ModelKind::LnnStructure | ModelKind::LnnStructureAngle => {
                structured_lagrangian_accel(&v, &v, a, b).map(|acc| cat(b, acc))
            }
            ModelKind::Chnn => {
                let m = v.cartesian_mass::<S>()?;
                constrained_hamiltonian_field(&m, &v, &self.system, s)
            }
            ModelKind::Clnn => {
                let m = v.cartesian_mass::<S>()?;
                constrained_lagrangian_accel(&m, &v, &self.system, a, b).map(|acc| cat(b, acc))
            }
        };
        self.wrap(out)
    }

    /// Data chart to native chart: `p = M_θ(q) q̇` for Hamiltonian models.
    pub fn encode<S: Scalar>(&self, params: &[S::Leaf], s: &[S]) -> Result<Vec<S>> {
        let n = self.check_state(s)?;
        if !self.kind.is_hamiltonian() {
            return Ok(s.to_vec());
        }
        let (q, qd) = s.split_at(n);
        let m = self.mass_matrix(params, q)?;
        Ok(cat(q, m.matvec(qd)))
    }

    /// Native chart back to the data chart: `q̇ = M_θ(q)⁻¹ p`.
    pub fn decode<S: Scalar>(&self, params: &[S::Leaf], s: &[S]) -> Result<Vec<S>> {
        let n = self.check_state(s)?;
        if !self.kind.is_hamiltonian() {
            return Ok(s.to_vec());
        }
        let (q, p) = s.split_at(n);
        let m = self.mass_matrix(params, q)?;
        let chol = Cholesky::factor(&m).map_err(|e| Error::InModel {
            kind: self.kind.name().to_string(),
            source: Box::new(Error::SingularDynamics {
                reason: format!("learned mass matrix: {e}"),
                state: s.iter().map(|v| v.value()).collect(),
            }),
        })?;
        Ok(cat(q, chol.solve(p)))
    }

    /// The scalar each model conserves, on the native state: `H_θ` for the
    /// Hamiltonian models, `½q̇ᵀM_θq̇ + V_θ` for the structured Lagrangian
    /// models and `q̇ᵀ∇_q̇L_θ − L_θ` for LNN.
    pub fn learned_energy<S: Scalar>(&self, params: &[S::Leaf], s: &[S]) -> Result<S> {
        let n = self.check_state(s)?;
        let v = self.view(params)?;
        let (a, b) = s.split_at(n);
        let e = match self.kind {
            ModelKind::Hnn | ModelKind::HnnAngle => v.hamiltonian(a, b),
            ModelKind::Lnn | ModelKind::LnnAngle => legendre_energy(&v, a, b),
            ModelKind::HnnStructure | ModelKind::HnnStructureAngle | ModelKind::Chnn => v.hamiltonian_energy(a, b),
            ModelKind::LnnStructure | ModelKind::LnnStructureAngle | ModelKind::Clnn => v.lagrangian_energy(a, b),
        };
        self.wrap(e)
    }

    /// Roll out from a data-chart state and return data-chart states
    /// `ŝ₁ … ŝ_T`.
    pub fn rollout<S: Scalar>(&self, params: &[S::Leaf], s0: &[S], dt: f64, steps: usize) -> Result<Vec<Vec<S>>> {
        let z0 = self.encode(params, s0)?;
        let traj = rollout(|z: &[S]| self.field(params, z), &z0, dt, steps)?;
        if !self.kind.is_hamiltonian() {
            return Ok(traj);
        }
        traj.iter().map(|z| self.decode(params, z)).collect()
    }
}

fn cat<S: Copy>(a: &[S], b: Vec<S>) -> Vec<S> {
    let mut out = a.to_vec();
    out.extend(b);
    out
}

/// `q̇ᵀ∇_q̇L − L`, the energy function of a Lagrangian.
pub fn legendre_energy<L, S, F>(lag: &F, q: &[S], qd: &[S]) -> Result<S>
where
    L: Scalar,
    S: Scalar<Leaf = L>,
    F: Lagrangian<L>,
{
    let q1 = Dual::lift(q);
    let mut val = lag.lagrangian(q, qd)?;
    let mut e = S::zero();
    for k in 0..qd.len() {
        let y = lag.lagrangian(&q1, &Dual::seed_axis(qd, k))?;
        e += qd[k] * y.tangent;
        val = y.primal;
    }
    Ok(e - val)
}

/// A model together with the parameter vector it is evaluated at.
struct View<'a, L> {
    model: &'a Model,
    params: &'a [L],
}

impl<L: Scalar> View<'_, L> {
    fn cartesian_mass<S: Scalar<Leaf = L>>(&self) -> Result<Mat<S>> {
        match &self.model.mass {
            MassPart::Block(b) => b.assemble::<S>(self.params),
            _ => Err(Error::Config("model has no Cartesian mass".into())),
        }
    }

    /// `½pᵀM⁻¹p + V`.
    fn hamiltonian_energy<S: Scalar<Leaf = L>>(&self, q: &[S], p: &[S]) -> Result<S> {
        let m = self.mass(q)?;
        let chol = Cholesky::factor(&m).map_err(|e| Error::SingularDynamics {
            reason: format!("learned mass matrix: {e}"),
            state: q.iter().chain(p).map(|x| x.value()).collect(),
        })?;
        Ok(dot(p, &chol.solve(p)) * 0.5 + self.potential(q)?)
    }

    /// `½q̇ᵀMq̇ + V`.
    fn lagrangian_energy<S: Scalar<Leaf = L>>(&self, q: &[S], qd: &[S]) -> Result<S> {
        Ok(dot(qd, &self.mass(q)?.matvec(qd)) * 0.5 + self.potential(q)?)
    }

    fn scalar_net<S: Scalar<Leaf = L>>(&self, input: &[S]) -> Result<S> {
        match &self.model.scalar {
            ScalarPart::Net(m) => Ok(m.forward(self.params, input)?[0]),
            ScalarPart::AnalyticPotential => Err(Error::Config("model has no energy network".into())),
        }
    }
}

impl<L: Scalar> MassMatrix<L> for View<'_, L> {
    fn mass<S: Scalar<Leaf = L>>(&self, q: &[S]) -> Result<Mat<S>> {
        match &self.model.mass {
            MassPart::Head(h) => h.mass(self.params, &self.model.embed.apply(q)),
            MassPart::Block(b) => b.assemble::<S>(self.params),
            MassPart::Analytic => Ok(self.model.system.mass_q(q)),
            MassPart::None => Err(Error::Config(format!("{} has no mass matrix", self.model.kind))),
        }
    }
}

impl<L: Scalar> Potential<L> for View<'_, L> {
    fn potential<S: Scalar<Leaf = L>>(&self, q: &[S]) -> Result<S> {
        match &self.model.scalar {
            ScalarPart::AnalyticPotential if self.model.kind.is_constrained() => {
                Ok(self.model.system.cartesian_potential(q))
            }
            ScalarPart::AnalyticPotential => Ok(self.model.system.potential_q(q)),
            ScalarPart::Net(_) if self.model.kind.is_constrained() => self.scalar_net(q),
            ScalarPart::Net(_) => self.scalar_net(&self.model.embed.apply(q)),
        }
    }
}

impl<L: Scalar> Lagrangian<L> for View<'_, L> {
    fn lagrangian<S: Scalar<Leaf = L>>(&self, q: &[S], qd: &[S]) -> Result<S> {
        self.scalar_net(&cat(&self.model.embed.apply(q), qd.to_vec()))
    }
}

impl<L: Scalar> Hamiltonian<L> for View<'_, L> {
    fn hamiltonian<S: Scalar<Leaf = L>>(&self, q: &[S], p: &[S]) -> Result<S> {
        self.scalar_net(&cat(&self.model.embed.apply(q), p.to_vec()))
    }
}
