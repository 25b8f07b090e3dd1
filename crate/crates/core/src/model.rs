//! Momentum grids, dispersion relations, couplings and the fiber Hamiltonian
//!
//! ```text
//! H(P) = Ψ(P − dΓ(p̂)) + dΓ(ω) + φ(v)
//! ```
//!
//! on the truncated Fock space over a finite grid of momentum cells.
//!
//! The grid is a half-cell-offset Cartesian lattice on `[−Λ_grid, Λ_grid]^d`
//! restricted to the closed ball of radius `Λ_grid`. Discretized symbols are
//! evaluated at the cell centers; one-boson coefficients carry `√w_i`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::fock::{mode_mask, second_quantize_real, supported_in, FockBasis, FockOperator, OneBosonVector};
use crate::levy::LevyProcessSpec;
use crate::pathint::TimeProfile;
use crate::stats::integrate_radial;

/// Default cap on the number of grid modes.
pub const DEFAULT_MODE_CAP: usize = 50_000;

/// Finite set of momentum cells `(k_i, w_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    dim: usize,
    momenta: Vec<[f64; 3]>,
    weights: Vec<f64>,
    cutoff: f64,
    spacing: f64,
}

/// Pads a `d`-vector to three components.
pub fn pad3(p: &[f64]) -> Result<[f64; 3]> {
    if p.is_empty() || p.len() > 3 {
        return Err(shape(format!("vector of dimension {} (expected 1..=3)", p.len())));
    }
    let mut out = [0.0; 3];
    out[..p.len()].copy_from_slice(p);
    Ok(out)
}

pub(crate) fn norm3(k: &[f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

/// Builds the offset Cartesian grid with the default mode cap.
pub fn build_grid(d: usize, cutoff: f64, cells_per_axis: usize) -> Result<ModeGrid> {
    build_grid_capped(d, cutoff, cells_per_axis, DEFAULT_MODE_CAP)
}

/// Cells of side `2·cutoff/cells_per_axis` centered at `−cutoff + (j + ½)h`,
/// keeping centers with `|k| ≤ cutoff`.
pub fn build_grid_capped(d: usize, cutoff: f64, cells_per_axis: usize, cap: usize) -> Result<ModeGrid> {
    if !(1..=3).contains(&d) {
        return Err(invalid(format!("dimension must be 1, 2 or 3, got {d}")));
    }
    if cells_per_axis == 0 {
        return Err(invalid("cells_per_axis must be at least 1"));
    }
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(invalid("grid cutoff must be positive and finite"));
    }
    let total = (cells_per_axis as u128).pow(d as u32);
    if total > 64 * cap as u128 {
        return Err(Error::GridTooLarge { modes: usize::MAX, cap });
    }
    let h = 2.0 * cutoff / cells_per_axis as f64;
    let axis: Vec<f64> = (0..cells_per_axis)
        .map(|j| {
            // exact zero for the middle cell of an odd axis
            let twice = 2 * j as i64 + 1 - cells_per_axis as i64;
            0.5 * h * twice as f64
        })
        .collect();
    let w = h.powi(d as i32);
    let mut momenta = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let mut k = [0.0; 3];
        for a in 0..d {
            k[a] = axis[idx[a]];
        }
        if norm3(&k) <= cutoff * (1.0 + 1e-12) {
            if k == [0.0; 3] {
                return Err(Error::DegenerateGrid("a cell is centered at k = 0".into()));
            }
            momenta.push(k);
        }
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < cells_per_axis {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == d {
                break;
            }
        }
        if a == d {
            break;
        }
    }
    if momenta.is_empty() {
        return Err(Error::DegenerateGrid("no cell inside the cutoff ball".into()));
    }
    if momenta.len() > cap {
        return Err(Error::GridTooLarge { modes: momenta.len(), cap });
    }
    let weights = vec![w; momenta.len()];
    Ok(ModeGrid { dim: d, momenta, weights, cutoff, spacing: h })
}

impl ModeGrid {
    /// Grid from explicit `(k, w)` cells.
    pub fn from_cells(d: usize, cells: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(invalid(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if cells.is_empty() {
            return Err(Error::DegenerateGrid("no cells".into()));
        }
        let mut momenta = Vec::with_capacity(cells.len());
        let mut weights = Vec::with_capacity(cells.len());
        let mut cutoff: f64 = 0.0;
        for (k, w) in cells {
            if k.len() != d {
                return Err(shape("cell momentum has the wrong dimension"));
            }
            let k = pad3(&k)?;
            if k == [0.0; 3] {
                return Err(Error::DegenerateGrid("a cell is centered at k = 0".into()));
            }
            if !(w > 0.0) {
                return Err(invalid("cell weights must be positive"));
            }
            cutoff = cutoff.max(norm3(&k));
            momenta.push(k);
            weights.push(w);
        }
        let spacing = weights[0].powf(1.0 / d as f64);
        Ok(Self { dim: d, momenta, weights, cutoff, spacing })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    pub fn momentum(&self, i: usize) -> [f64; 3] {
        self.momenta[i]
    }

    pub fn momenta(&self) -> &[[f64; 3]] {
        &self.momenta
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Cell side length.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn norms(&self) -> Vec<f64> {
        self.momenta.iter().map(norm3).collect()
    }

    /// Whether the cell set is invariant under `k → −k`.
    pub fn is_reflection_symmetric(&self) -> bool {
        self.momenta.iter().all(|k| {
            self.momenta
                .iter()
                .any(|q| (0..3).all(|a| (q[a] + k[a]).abs() <= 1e-12 * (1.0 + k[a].abs())))
        })
    }
}

/// Particle dispersion `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum ParticleDispersion {
    /// `Ψ(p) = |p|²/2`.
    NonRel,
    /// `Ψ(p) = √(|p|² + M²) − M`.
    SemiRel {
        #[serde(rename = "M")]
        mass: f64,
    },
}

impl ParticleDispersion {
    /// `Ψ` as a function of `|p|`.
    pub fn of_norm(&self, r: f64) -> f64 {
        match *self {
            ParticleDispersion::NonRel => 0.5 * r * r,
            ParticleDispersion::SemiRel { mass } => {
                // cancellation-free form of √(r² + M²) − M
                let r2 = r * r;
                r2 / ((r2 + mass * mass).sqrt() + mass)
            }
        }
    }

    pub fn eval3(&self, p: &[f64; 3]) -> f64 {
        self.of_norm(norm3(p))
    }

    /// Lévy process whose characteristic exponent is this dispersion.
    pub fn levy(&self, d: usize) -> LevyProcessSpec {
        match *self {
            ParticleDispersion::NonRel => LevyProcessSpec::BrownianNR { d },
            ParticleDispersion::SemiRel { mass } => LevyProcessSpec::RelativisticSR { d, mass },
        }
    }

    fn validate(&self) -> Result<()> {
        if let ParticleDispersion::SemiRel { mass } = *self {
            if !(mass >= 0.0 && mass.is_finite()) {
                return Err(invalid("particle mass M must be a finite non-negative number"));
            }
        }
        Ok(())
    }
}

/// `Ψ(p)` for a `d`-vector.
pub fn eval_particle_dispersion(disp: &ParticleDispersion, p: &[f64]) -> f64 {
    disp.of_norm(p.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Boson dispersion `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum BosonDispersion {
    /// `ω(k) = √(|k|² + m²)`.
    Massive { m: f64 },
    /// `ω ≡ 1`.
    ConstantOne,
}

impl BosonDispersion {
    pub fn of_norm(&self, r: f64) -> f64 {
        match *self {
            BosonDispersion::Massive { m } => (r * r + m * m).sqrt(),
            BosonDispersion::ConstantOne => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if let BosonDispersion::Massive { m } = *self {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(invalid("boson mass m must be a finite non-negative number"));
            }
        }
        Ok(())
    }
}

/// Coupling function with sharp ultraviolet cutoff `Λ` (`None` is `Λ = ∞`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum CouplingSpec {
    /// `v(k) = λ 1_{|k|<Λ} ω(k)^{−1/2}`.
    NelsonUV {
        lambda: f64,
        #[serde(rename = "Lambda", default)]
        cutoff: Option<f64>,
    },
    /// `v(k) = λ 1_{|k|<Λ} |k|^{−1}`.
    FrohlichUV {
        lambda: f64,
        #[serde(rename = "Lambda", default)]
        cutoff: Option<f64>,
    },
}

impl CouplingSpec {
    pub fn lambda(&self) -> f64 {
        match *self {
            CouplingSpec::NelsonUV { lambda, .. } | CouplingSpec::FrohlichUV { lambda, .. } => lambda,
        }
    }

    pub fn cutoff(&self) -> Option<f64> {
        match *self {
            CouplingSpec::NelsonUV { cutoff, .. } | CouplingSpec::FrohlichUV { cutoff, .. } => cutoff,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        match *self {
            CouplingSpec::NelsonUV { cutoff, .. } => CouplingSpec::NelsonUV { lambda, cutoff },
            CouplingSpec::FrohlichUV { cutoff, .. } => CouplingSpec::FrohlichUV { lambda, cutoff },
        }
    }

    pub fn with_cutoff(&self, cutoff: Option<f64>) -> Self {
        match *self {
            CouplingSpec::NelsonUV { lambda, .. } => CouplingSpec::NelsonUV { lambda, cutoff },
            CouplingSpec::FrohlichUV { lambda, .. } => CouplingSpec::FrohlichUV { lambda, cutoff },
        }
    }

    /// `v` as a function of `|k|`, without the cell weight.
    pub fn of_norm(&self, boson: &BosonDispersion, r: f64) -> f64 {
        if let Some(l) = self.cutoff() {
            if r >= l {
                return 0.0;
            }
        }
        match *self {
            CouplingSpec::NelsonUV { lambda, .. } => lambda / boson.of_norm(r).sqrt(),
            CouplingSpec::FrohlichUV { lambda, .. } => lambda / r,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.lambda().is_finite() {
            return Err(invalid("coupling constant must be finite"));
        }
        if let Some(l) = self.cutoff() {
            if !(l > 0.0) {
                return Err(invalid("coupling cutoff Lambda must be positive"));
            }
        }
        Ok(())
    }
}

/// Grid section of a [`ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub cutoff: f64,
    pub cells_per_axis: usize,
}

/// Serializable model description, the single source of truth of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    pub particle: ParticleDispersion,
    pub boson: BosonDispersion,
    pub coupling: CouplingSpec,
    pub grid: GridSpec,
}

impl ModelSpec {
    /// `(NonRel, d = 3)` and `(SemiRel, d = 2, m > 0)`.
    pub fn is_canonical(&self) -> bool {
        match (self.particle, self.d) {
            (ParticleDispersion::NonRel, 3) => true,
            (ParticleDispersion::SemiRel { .. }, 2) => {
                matches!(self.boson, BosonDispersion::Massive { m } if m > 0.0)
            }
            _ => false,
        }
    }

    pub fn build(&self) -> Result<Model> {
        if let (Some(l), cutoff) = (self.coupling.cutoff(), self.grid.cutoff) {
            if l > cutoff * (1.0 + 1e-12) {
                return Err(invalid(format!(
                    "coupling cutoff Lambda = {l} exceeds the grid cutoff {cutoff}"
                )));
            }
        }
        let grid = build_grid(self.d, self.grid.cutoff, self.grid.cells_per_axis)?;
        let mut model = Model::new(self.particle, self.boson, self.coupling, grid)?;
        model.spec = Some(*self);
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model spec serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// A realized model: dispersions, coupling and grid with derived mode arrays.
#[derive(Debug, Clone)]
pub struct Model {
    particle: ParticleDispersion,
    boson: BosonDispersion,
    coupling: CouplingSpec,
    grid: ModeGrid,
    omega: Vec<f64>,
    v: OneBosonVector,
    spec: Option<ModelSpec>,
}

impl Model {
    pub fn new(
        particle: ParticleDispersion,
        boson: BosonDispersion,
        coupling: CouplingSpec,
        grid: ModeGrid,
    ) -> Result<Self> {
        particle.validate()?;
        boson.validate()?;
        coupling.validate()?;
        let omega: Vec<f64> = grid.norms().iter().map(|&r| boson.of_norm(r)).collect();
        if omega.iter().any(|&w| !(w > 0.0)) {
            return Err(invalid("boson dispersion vanishes on a grid cell"));
        }
        let v = discretize_coupling(&coupling, &boson, &grid);
        Ok(Self { particle, boson, coupling, grid, omega, v, spec: None })
    }

    /// Replaces the discretized coupling vector (kept symbols unchanged).
    pub fn with_coupling_vector(&self, v: OneBosonVector) -> Result<Self> {
        if v.len() != self.grid.len() {
            return Err(shape("coupling vector length differs from the mode count"));
        }
        let mut m = self.clone();
        m.v = v;
        m.spec = None;
        Ok(m)
    }

    /// Same model with the coupling set to zero outside `theta`.
    pub fn restricted_to(&self, theta: &[usize]) -> Result<Self> {
        let mask = mode_mask(self.grid.len(), theta)?;
        let v = OneBosonVector::new(
            self.v
                .as_slice()
                .iter()
                .zip(&mask)
                .map(|(&c, &keep)| if keep { c } else { Complex64::new(0.0, 0.0) })
                .collect(),
        );
        self.with_coupling_vector(v)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn num_modes(&self) -> usize {
        self.grid.len()
    }

    pub fn particle(&self) -> &ParticleDispersion {
        &self.particle
    }

    pub fn boson(&self) -> &BosonDispersion {
        &self.boson
    }

    pub fn coupling(&self) -> &CouplingSpec {
        &self.coupling
    }

    pub fn grid(&self) -> &ModeGrid {
        &self.grid
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Discretized coupling `v(k_i)·√w_i`.
    pub fn coupling_vector(&self) -> &OneBosonVector {
        &self.v
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.spec.as_ref()
    }

    pub fn levy(&self) -> LevyProcessSpec {
        self.particle.levy(self.dim())
    }

    /// Replay fingerprint: the `ModelSpec` JSON, or a description of a custom model.
    pub fn fingerprint(&self) -> String {
        match &self.spec {
            Some(s) => s.to_json(),
            None => {
                let v: Vec<[f64; 2]> = self.v.as_slice().iter().map(|c| [c.re, c.im]).collect();
                serde_json::json!({
                    "d": self.dim(),
                    "particle": self.particle,
                    "boson": self.boson,
                    "coupling_vector": v,
                    "momenta": self.grid.momenta().iter().map(|k| &k[..self.dim()]).collect::<Vec<_>>(),
                    "weights": self.grid.weights(),
                })
                .to_string()
            }
        }
    }

    pub(crate) fn check_basis(&self, basis: &FockBasis) -> Result<()> {
        if basis.num_modes() != self.grid.len() {
            return Err(shape(format!(
                "basis has {} modes, grid has {}",
                basis.num_modes(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn momentum3(&self, p: &[f64]) -> Result<[f64; 3]> {
        if p.len() != self.dim() {
            return Err(shape(format!("momentum of dimension {} in a d = {} model", p.len(), self.dim())));
        }
        pad3(p)
    }

    /// Diagonal `Ψ(P − K_n) + Σ_i n_i ω_i`.
    pub fn free_diagonal(&self, p: &[f64], basis: &FockBasis) -> Result<Vec<f64>> {
        self.check_basis(basis)?;
        let p = self.momentum3(p)?;
        let k = basis.total_momenta(&self.grid)?;
        let field = second_quantize_real(basis, &self.omega);
        Ok(k.iter()
            .zip(field)
            .map(|(kn, e)| self.particle.eval3(&[p[0] - kn[0], p[1] - kn[1], p[2] - kn[2]]) + e)
            .collect())
    }
}

/// Coefficients `v(k_i)·√w_i`, zero where `|k_i| ≥ Λ`.
pub fn discretize_coupling(spec: &CouplingSpec, boson: &BosonDispersion, grid: &ModeGrid) -> OneBosonVector {
    OneBosonVector::from_real(
        &grid
            .norms()
            .iter()
            .zip(grid.weights())
            .map(|(&r, &w)| spec.of_norm(boson, r) * w.sqrt())
            .collect::<Vec<_>>(),
    )
}

/// Dense matrix of `H(P)`.
pub fn build_hamiltonian(model: &Model, p: &[f64], basis: &Arc<FockBasis>) -> Result<FockOperator> {
    let diag = model.free_diagonal(p, basis)?;
    let mut m = interaction_matrix(basis, model.coupling_vector(), model.coupling_vector(), 1.0);
    for (i, e) in diag.iter().enumerate() {
        m[(i, i)] += Complex64::new(*e, 0.0);
    }
    FockOperator::from_dense(basis.clone(), m)
}

/// `c·(a(g_ann) + a†(g_cre))` as a dense matrix.
pub(crate) fn interaction_matrix(
    basis: &FockBasis,
    g_ann: &OneBosonVector,
    g_cre: &OneBosonVector,
    c: f64,
) -> DMatrix<Complex64> {
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for col in 0..n {
        psi.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        out.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        psi[col] = Complex64::new(1.0, 0.0);
        basis.lower_into(g_ann.as_slice(), &psi, &mut out);
        basis.raise_into(g_cre.as_slice(), &psi, &mut out);
        for (row, x) in out.iter().enumerate() {
            if *x != Complex64::new(0.0, 0.0) {
                m[(row, col)] = *x * c;
            }
        }
    }
    m
}

/// Quadrature rule for the renormalization energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenormMethod {
    /// Sum over the model's own grid cells.
    GridSum,
    /// One-dimensional radial integral of the continuum symbol.
    RadialQuadrature,
}

/// Surface measure of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => f64::NAN,
    }
}

/// `E_Λ = −Σ_i |v_i|² / (Ψ(k_i) + ω(k_i))` or its radial continuum analogue.
pub fn renorm_energy(model: &Model, method: RenormMethod) -> Result<f64> {
    match method {
        RenormMethod::GridSum => {
            let norms = model.grid.norms();
            Ok(-model
                .v
                .as_slice()
                .iter()
                .zip(&norms)
                .zip(&model.omega)
                .map(|((c, &r), &w)| c.norm_sqr() / (model.particle.of_norm(r) + w))
                .sum::<f64>())
        }
        RenormMethod::RadialQuadrature => {
            let cutoff = model
                .coupling
                .cutoff()
                .ok_or_else(|| invalid("radial quadrature needs a finite coupling cutoff"))?;
            Ok(radial_renorm_energy(&model.particle, &model.boson, &model.coupling, model.dim(), cutoff))
        }
    }
}

/// `−S_{d−1} ∫_0^Λ r^{d−1} v(r)² / (Ψ(r) + ω(r)) dr`.
pub fn radial_renorm_energy(
    particle: &ParticleDispersion,
    boson: &BosonDispersion,
    coupling: &CouplingSpec,
    d: usize,
    cutoff: f64,
) -> f64 {
    let c = coupling.with_cutoff(None);
    let f = |r: f64| {
        if r == 0.0 {
            return if d == 1 { integrand_at_zero(particle, boson, &c) } else { 0.0 };
        }
        let v = c.of_norm(boson, r);
        r.powi(d as i32 - 1) * v * v / (particle.of_norm(r) + boson.of_norm(r))
    };
    -sphere_area(d) * integrate_radial(&f, cutoff, 1e-13)
}

fn integrand_at_zero(particle: &ParticleDispersion, boson: &BosonDispersion, c: &CouplingSpec) -> f64 {
    let v = c.of_norm(boson, 0.0);
    v * v / (particle.of_norm(0.0) + boson.of_norm(0.0))
}

/// Diagonal remainder `L = Ψ(P₁ − K_{θ₁}) + Ψ(P₂ − K_{θ₂}) − Ψ(P₁ + P₂ − K_{θ₁∪θ₂})`
/// and its minimum over the states supported in `θ₁ ∪ θ₂`.
pub fn build_l(
    p1: &[f64],
    p2: &[f64],
    theta1: &[usize],
    theta2: &[usize],
    disp: &ParticleDispersion,
    basis: &Arc<FockBasis>,
    grid: &ModeGrid,
) -> Result<(FockOperator, f64)> {
    let m = grid.len();
    if basis.num_modes() != m {
        return Err(shape("basis and grid mode counts differ"));
    }
    let mask1 = mode_mask(m, theta1)?;
    let mask2 = mode_mask(m, theta2)?;
    if let Some(i) = (0..m).find(|&i| mask1[i] && mask2[i]) {
        return Err(Error::OverlappingSubsets(i));
    }
    let d = grid.dim();
    if p1.len() != d || p2.len() != d {
        return Err(shape("P1 and P2 must match the grid dimension"));
    }
    let (p1, p2) = (pad3(p1)?, pad3(p2)?);
    let union: Vec<bool> = mask1.iter().zip(&mask2).map(|(a, b)| *a || *b).collect();
    let mut diag = Vec::with_capacity(basis.len());
    let mut lower = f64::INFINITY;
    for s in 0..basis.len() {
        let n = basis.state(s);
        let mut k1 = [0.0; 3];
        let mut k2 = [0.0; 3];
        for (i, &ni) in n.iter().enumerate() {
            let ki = grid.momentum(i);
            let target = if mask1[i] {
                &mut k1
            } else if mask2[i] {
                &mut k2
            } else {
                continue;
            };
            for a in 0..3 {
                target[a] += ni as f64 * ki[a];
            }
        }
        let mut q1 = [0.0; 3];
        let mut q2 = [0.0; 3];
        let mut q = [0.0; 3];
        for a in 0..3 {
            q1[a] = p1[a] - k1[a];
            q2[a] = p2[a] - k2[a];
            q[a] = q1[a] + q2[a];
        }
        let l = disp.eval3(&q1) + disp.eval3(&q2) - disp.eval3(&q);
        if supported_in(basis, s, &union) {
            lower = lower.min(l);
        }
        diag.push(l);
    }
    Ok((FockOperator::from_real_diagonal(basis.clone(), &diag)?, lower))
}

/// Generator `Ψ(P − dΓ(p̂)) + dΓ(ω f′(t)) − a(g₋(t)) − a†(g₊(t))` of the
/// propagator estimated by the path integral.
///
/// With the Nelson profile `f(t) = t`, `g± = −v` this is `H(P)`.
pub fn build_generator(
    model: &Model,
    p: &[f64],
    profile: &TimeProfile,
    t: f64,
    basis: &Arc<FockBasis>,
) -> Result<FockOperator> {
    model.check_basis(basis)?;
    profile.check_modes(model.num_modes())?;
    let p3 = model.momentum3(p)?;
    let k = basis.total_momenta(&model.grid)?;
    let rate = profile.df(t);
    let field = second_quantize_real(basis, &model.omega);
    let gm = profile.g_minus_at(t);
    let gp = profile.g_plus_at(t);
    let mut m = interaction_matrix(basis, &gm, &gp, -1.0);
    for (s, kn) in k.iter().enumerate() {
        let psi = model.particle.eval3(&[p3[0] - kn[0], p3[1] - kn[1], p3[2] - kn[2]]);
        m[(s, s)] += Complex64::new(psi + rate * field[s], 0.0);
    }
    FockOperator::from_dense(basis.clone(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::enumerate_basis;

    fn nelson(lambda: f64, cutoff: Option<f64>) -> CouplingSpec {
        CouplingSpec::NelsonUV { lambda, cutoff }
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(1, 1.0, 2).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.momentum(0)[0], -0.5);
        assert_eq!(g.momentum(1)[0], 0.5);
        assert_eq!(g.weights(), &[1.0, 1.0]);
        let g = build_grid(2, 1.0, 4).unwrap();
        assert_eq!(g.len(), 12);
        assert!(g.weights().iter().all(|&w| w == 0.25));
        assert!(matches!(build_grid(3, 1.0, 1), Err(Error::DegenerateGrid(_))));
        assert!(matches!(build_grid(2, 1.0, 3), Err(Error::DegenerateGrid(_))));
        assert!(matches!(build_grid_capped(3, 1.0, 40, 100), Err(Error::GridTooLarge { .. })));
        assert!(build_grid(4, 1.0, 2).is_err());
        assert!(g.is_reflection_symmetric());
    }

    #[test]
    fn grid_invariants() {
        for d in 1..=3 {
            for cpa in [2usize, 4, 6, 8] {
                let g = build_grid(d, 1.5, cpa).unwrap();
                let h = 3.0 / cpa as f64;
                assert!(g.norms().iter().all(|&r| r > 0.0 && r <= 1.5 + 1e-12));
                let vol: f64 = g.weights().iter().sum();
                let ball = sphere_area(d) * 1.5f64.powi(d as i32) / d as f64;
                // the covered volume differs from the ball by boundary cells only
                assert!((vol - ball).abs() <= sphere_area(d) * 1.5f64.powi(d as i32 - 1) * h * 2.0);
            }
        }
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(eval_particle_dispersion(&ParticleDispersion::NonRel, &[2.0, 0.0, 0.0]), 2.0);
        let sr = ParticleDispersion::SemiRel { mass: 3.0 };
        assert!((eval_particle_dispersion(&sr, &[4.0, 0.0]) - 2.0).abs() < 1e-15);
        let sr0 = ParticleDispersion::SemiRel { mass: 0.0 };
        assert!((eval_particle_dispersion(&sr0, &[3.0, 4.0]) - 5.0).abs() < 1e-15);
        assert_eq!(ParticleDispersion::NonRel.of_norm(0.0), 0.0);
        assert_eq!(sr.of_norm(0.0), 0.0);
    }

    #[test]
    fn coupling_examples() {
        let g = build_grid(1, 1.0, 2).unwrap();
        let boson = BosonDispersion::Massive { m: 1.0 };
        let v = discretize_coupling(&nelson(0.0, None), &boson, &g);
        assert_eq!(v.norm(), 0.0);
        let g = ModeGrid::from_cells(3, vec![(vec![4.0, 0.0, 0.0], 1.0)]).unwrap();
        let v = discretize_coupling(&nelson(-1.0, None), &BosonDispersion::Massive { m: 0.0 }, &g);
        assert_eq!(v.as_slice()[0].re, -0.5);
        let v = discretize_coupling(&nelson(-1.0, Some(4.0)), &BosonDispersion::Massive { m: 0.0 }, &g);
        assert_eq!(v.as_slice()[0].re, 0.0);
    }

    #[test]
    fn coupling_norm_converges_to_radial_integral() {
        let boson = BosonDispersion::Massive { m: 1.0 };
        let c = nelson(1.0, Some(2.0));
        let g = build_grid(3, 2.0, 32).unwrap();
        let v = discretize_coupling(&c, &boson, &g);
        let exact = 4.0 * PI * integrate_radial(&|r: f64| r * r / (r * r + 1.0).sqrt(), 2.0, 1e-13);
        assert!((v.norm_sq() - exact).abs() / exact < 0.02);
    }

    fn two_by_two() -> (Model, Arc<FockBasis>) {
        let g = ModeGrid::from_cells(3, vec![(vec![1.0, 0.0, 0.0], 1.0)]).unwrap();
        let m = Model::new(
            ParticleDispersion::NonRel,
            BosonDispersion::Massive { m: 0.0 },
            nelson(-0.5, None),
            g,
        )
        .unwrap();
        (m, enumerate_basis(1, 1).unwrap())
    }

    #[test]
    fn hamiltonian_two_by_two() {
        let (m, b) = two_by_two();
        let h = build_hamiltonian(&m, &[0.0, 0.0, 0.0], &b).unwrap();
        let want = [[0.0, -0.5], [-0.5, 1.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h.entry(i, j) - Complex64::new(want[i][j], 0.0)).norm() < 1e-15);
            }
        }
        assert!(h.is_hermitian());
        let free = m.with_coupling_vector(OneBosonVector::zeros(1)).unwrap();
        let h0 = build_hamiltonian(&free, &[0.3, 0.0, 0.0], &b).unwrap();
        assert!((h0.entry(0, 0).re - 0.045).abs() < 1e-15);
        assert_eq!(h0.entry(0, 1).norm(), 0.0);
    }

    #[test]
    fn hamiltonian_is_affine_in_lambda() {
        let spec = |lambda| ModelSpec {
            d: 1,
            particle: ParticleDispersion::NonRel,
            boson: BosonDispersion::Massive { m: 1.0 },
            coupling: nelson(lambda, None),
            grid: GridSpec { cutoff: 1.0, cells_per_axis: 4 },
        };
        let b = enumerate_basis(4, 2).unwrap();
        let h = |l: f64| build_hamiltonian(&spec(l).build().unwrap(), &[0.4], &b).unwrap().into_dense();
        let (h0, h1, h3) = (h(0.0), h(1.0), h(-3.0));
        assert!((&h3 - (&h0 + (&h1 - &h0) * Complex64::new(-3.0, 0.0))).norm() < 1e-12);
        let neg = h(-0.7);
        for i in 0..b.len() {
            for j in 0..b.len() {
                if i != j {
                    assert!(neg[(i, j)].re <= 0.0 && neg[(i, j)].im == 0.0);
                }
            }
        }
    }

    #[test]
    fn renorm_energy_examples() {
        let spec = |lambda, l| ModelSpec {
            d: 3,
            particle: ParticleDispersion::NonRel,
            boson: BosonDispersion::Massive { m: 1.0 },
            coupling: nelson(lambda, Some(l)),
            grid: GridSpec { cutoff: l, cells_per_axis: (2.0 * l) as usize },
        };
        assert_eq!(renorm_energy(&spec(0.0, 2.0).build().unwrap(), RenormMethod::GridSum).unwrap(), 0.0);
        let mut prev = 0.0;
        for l in [1.0, 2.0, 4.0, 8.0] {
            let e = renorm_energy(&spec(1.0, l).build().unwrap(), RenormMethod::GridSum).unwrap();
            assert!(e <= prev);
            prev = e;
        }
        let e = renorm_energy(&spec(1.0, 2.0).build().unwrap(), RenormMethod::RadialQuadrature).unwrap();
        assert!(e < 0.0);
        let inf = ModelSpec { coupling: nelson(1.0, None), ..spec(1.0, 2.0) }.build().unwrap();
        assert!(renorm_energy(&inf, RenormMethod::RadialQuadrature).is_err());
    }

    #[test]
    fn l_operator_examples() {
        let g = build_grid(1, 1.0, 2).unwrap();
        let b = enumerate_basis(2, 2).unwrap();
        let nr = ParticleDispersion::NonRel;
        let (l, lb) = build_l(&[0.0], &[0.0], &[0], &[1], &nr, &b, &g).unwrap();
        assert_eq!(l.entry(0, 0).re, 0.0);
        let (l, lb2) = build_l(&[1.0], &[0.0], &[0], &[1], &nr, &b, &g).unwrap();
        let mut brute = f64::INFINITY;
        for s in 0..b.len() {
            let n = b.state(s);
            let a = -0.5 * n[0] as f64;
            let bb = 0.5 * n[1] as f64;
            let v = 0.5 * ((1.0 - a).powi(2) + bb * bb - (1.0 - a - bb).powi(2));
            assert!((l.entry(s, s).re - v).abs() < 1e-14);
            brute = brute.min(v);
        }
        assert_eq!(lb2, brute);
        assert!(lb <= 0.0);
        assert!(matches!(build_l(&[0.0], &[0.0], &[0, 1], &[1], &nr, &b, &g), Err(Error::OverlappingSubsets(1))));
    }

    #[test]
    fn spec_json_roundtrip() {
        let s = ModelSpec {
            d: 2,
            particle: ParticleDispersion::SemiRel { mass: 1.0 },
            boson: BosonDispersion::Massive { m: 0.5 },
            coupling: CouplingSpec::FrohlichUV { lambda: -1.0, cutoff: None },
            grid: GridSpec { cutoff: 1.0, cells_per_axis: 4 },
        };
        let j = s.to_json();
        assert!(j.contains("\"Lambda\":null"));
        assert!(j.contains("\"M\":1.0"));
        assert_eq!(ModelSpec::from_json(&j).unwrap(), s);
        let bad = j.replace("\"cells_per_axis\"", "\"cells\"");
        assert!(ModelSpec::from_json(&bad).is_err());
        assert!(s.is_canonical());
    }
}
