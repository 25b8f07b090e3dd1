//! Path functionals and the Monte Carlo Feynman–Kac estimator.
//!
//! For a window `[s, t]`, heat time `τ = f(t) − f(s)` and a sampled path `X`,
//! the per-path operator is
//!
//! ```text
//! W = e^u · F_{τ/2}(U⁺) · F_{τ/2}(U⁻)†,     S_{s,t}(P) = E[ W · e^{i(P − dΓ(p̂))·(X_t − X_s)} ]
//! ```
//!
//! with, writing `Y_r = X_t − X_r` for the displacement still to come,
//!
//! ```text
//! U⁻   = ∫_s^t e^{−(f(r)−f(s))ω} e^{−ik·Y_r} g₋(r) dr
//! U⁺   = ∫_s^t e^{−(f(t)−f(r))ω} e^{−ik·Y_r} g₊(r) dr
//! u    = ∫_s^t ⟨e^{−ik·Y_r} g₋(r), ∫_s^r e^{−(f(r)−f(q))ω} e^{−ik·Y_q} g₊(q) dq⟩ dr.
//! ```
//!
//! `S` solves `∂_t S_{s,t} = −G(t) S_{s,t}` with the generator of
//! [`crate::model::build_generator`]. For time-symmetric profiles the law of
//! `Y` on `[s, t]` equals that of the forward increments `X_r − X_s`, so the
//! forward form gives the same expectation.
//!
//! The time integrals use the composite trapezoid rule on the path nodes; the
//! inner integral of `u` is accumulated by the recursion
//! `A_j = e^{−(f_j − f_{j−1})ω}(A_{j−1} + Δ/2·y_{j−1}) + Δ/2·y_j`.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::fock::{creation_exponential, enumerate_basis, heat_diagonal, FockBasis, FockOperator, OneBosonVector};
use crate::levy::{sample_path, LevyPath, LevyProcessSpec, TimeGrid};
use crate::model::{renorm_energy, Model, ModeGrid, RenormMethod};
use crate::stats::Neumaier;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Time scale `f` of the free field part, `f(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum TimeScale {
    /// `f(t) = rate·t`.
    Linear { rate: f64 },
    /// `f(t) = rate·t + accel·t²/2`.
    Quadratic { rate: f64, accel: f64 },
}

impl TimeScale {
    pub fn f(&self, t: f64) -> f64 {
        match *self {
            TimeScale::Linear { rate } => rate * t,
            TimeScale::Quadratic { rate, accel } => rate * t + 0.5 * accel * t * t,
        }
    }

    pub fn df(&self, t: f64) -> f64 {
        match *self {
            TimeScale::Linear { rate } => rate,
            TimeScale::Quadratic { rate, accel } => rate + accel * t,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TimeScale::Linear { rate } => rate > 0.0 && rate.is_finite(),
            TimeScale::Quadratic { rate, accel } => rate > 0.0 && accel >= 0.0 && (rate + accel).is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("time scale must be strictly increasing on t ≥ 0"))
        }
    }
}

/// `g(t) = (1 + ramp·t)·base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub base: OneBosonVector,
    #[serde(default)]
    pub ramp: f64,
}

impl Schedule {
    pub fn constant(base: OneBosonVector) -> Self {
        Self { base, ramp: 0.0 }
    }

    pub fn factor(&self, t: f64) -> f64 {
        1.0 + self.ramp * t
    }

    pub fn at(&self, t: f64) -> OneBosonVector {
        self.base.scale(Complex64::new(self.factor(t), 0.0))
    }
}

/// Time-scale function `f` and coupling schedules `g±` of a propagator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeProfile {
    pub scale: TimeScale,
    pub g_minus: Schedule,
    pub g_plus: Schedule,
}

impl TimeProfile {
    pub fn new(scale: TimeScale, g_minus: Schedule, g_plus: Schedule) -> Result<Self> {
        scale.validate()?;
        if g_minus.base.len() != g_plus.base.len() {
            return Err(shape("g- and g+ have different lengths"));
        }
        Ok(Self { scale, g_minus, g_plus })
    }

    /// `f(t) = t`, `g± = −v`: the propagator is `e^{−(t−s)H(P)}`.
    pub fn nelson(model: &Model) -> Self {
        let g = model.coupling_vector().scale(Complex64::new(-1.0, 0.0));
        Self {
            scale: TimeScale::Linear { rate: 1.0 },
            g_minus: Schedule::constant(g.clone()),
            g_plus: Schedule::constant(g),
        }
    }

    pub fn f(&self, t: f64) -> f64 {
        self.scale.f(t)
    }

    pub fn df(&self, t: f64) -> f64 {
        self.scale.df(t)
    }

    pub fn g_minus_at(&self, t: f64) -> OneBosonVector {
        self.g_minus.at(t)
    }

    pub fn g_plus_at(&self, t: f64) -> OneBosonVector {
        self.g_plus.at(t)
    }

    /// Linear scale and unramped schedules.
    pub fn is_time_independent(&self) -> bool {
        matches!(self.scale, TimeScale::Linear { .. }) && self.g_minus.ramp == 0.0 && self.g_plus.ramp == 0.0
    }

    pub(crate) fn check_modes(&self, m: usize) -> Result<()> {
        self.scale.validate()?;
        if self.g_minus.base.len() != m || self.g_plus.base.len() != m {
            return Err(shape(format!("profile vectors do not have {m} modes")));
        }
        Ok(())
    }
}

/// Quadrature rule used for the path functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Trapezoid,
}

/// `u`, `U⁻` and `U⁺` of one path on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunctionals {
    pub u: Complex64,
    pub u_minus: OneBosonVector,
    pub u_plus: OneBosonVector,
    pub window: (f64, f64),
    pub dt: f64,
    pub rule: QuadratureRule,
}

fn window_nodes(path: &LevyPath, s: f64, t: f64) -> Result<(usize, usize)> {
    if !(s < t) {
        return Err(invalid(format!("window needs s < t, got [{s}, {t}]")));
    }
    let g = path.grid();
    match (g.node_index(s), g.node_index(t)) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Window { s, t }),
    }
}

fn trapezoid_weights(n: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n + 1];
    w[0] = 0.5 * dt;
    w[n] = 0.5 * dt;
    w
}

fn phases(k: &[[f64; 3]], x: &[f64; 3]) -> Vec<Complex64> {
    k.iter()
        .map(|ki| {
            let arg = -(ki[0] * x[0] + ki[1] * x[1] + ki[2] * x[2]);
            Complex64::new(arg.cos(), arg.sin())
        })
        .collect()
}

fn rel(path: &LevyPath, j: usize, origin: usize) -> [f64; 3] {
    let (a, b) = (path.position3(j), path.position3(origin));
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `U_v(s, t) = ∫_s^t e^{−ik·(X_r − X_s)} v(r) dr` by the trapezoid rule.
pub fn compute_u(
    v_of_t: &dyn Fn(f64) -> OneBosonVector,
    s: f64,
    t: f64,
    path: &LevyPath,
    grid: &ModeGrid,
) -> Result<OneBosonVector> {
    let (a, b) = window_nodes(path, s, t)?;
    let dt = path.grid().dt();
    let w = trapezoid_weights(b - a, dt);
    let mut acc = vec![ZERO; grid.len()];
    for j in a..=b {
        let v = v_of_t(path.grid().node(j));
        if v.len() != grid.len() {
            return Err(shape("v(t) length differs from the mode count"));
        }
        let ph = phases(grid.momenta(), &rel(path, j, a));
        for ((acc_i, p), vi) in acc.iter_mut().zip(&ph).zip(v.as_slice()) {
            *acc_i += p * vi * w[j - a];
        }
    }
    Ok(OneBosonVector::new(acc))
}

/// Two-time kernel `(t', s') ↦ α(t', s')`.
pub type Kernel<'a> = dyn Fn(f64, f64) -> OneBosonVector + 'a;

/// `∫∫_{[s,t]²} ⟨e^{−ik·X_{t'}} α⁻(t',s'), e^{−ik·X_{s'}} α⁺(t',s')⟩ ds' dt'`
/// by the tensor trapezoid rule, positions relative to `X_s`.
pub fn compute_u_double(
    alpha_minus: &Kernel,
    alpha_plus: &Kernel,
    s: f64,
    t: f64,
    path: &LevyPath,
    grid: &ModeGrid,
) -> Result<Complex64> {
    let (a, b) = window_nodes(path, s, t)?;
    let w = trapezoid_weights(b - a, path.grid().dt());
    let ph: Vec<Vec<Complex64>> = (a..=b).map(|j| phases(grid.momenta(), &rel(path, j, a))).collect();
    let mut acc = Neumaier::default();
    let mut acc_im = Neumaier::default();
    for j in a..=b {
        let tj = path.grid().node(j);
        for l in a..=b {
            let tl = path.grid().node(l);
            let am = alpha_minus(tj, tl);
            let ap = alpha_plus(tj, tl);
            if am.len() != grid.len() || ap.len() != grid.len() {
                return Err(shape("kernel length differs from the mode count"));
            }
            let mut z = ZERO;
            for i in 0..grid.len() {
                z += (ph[j - a][i] * am.as_slice()[i]).conj() * ph[l - a][i] * ap.as_slice()[i];
            }
            let c = z * (w[j - a] * w[l - a]);
            acc.add(c.re);
            acc_im.add(c.im);
        }
    }
    Ok(Complex64::new(acc.value(), acc_im.value()))
}

/// Kernels `α⁻(t',s') = 2^{−1/2} g₋(t')` and
/// `α⁺(t',s') = 2^{−1/2} e^{−|f(t')−f(s')|ω} g₊(s')`; for these
/// [`compute_u_double`] equals the real part of [`u_single_form`].
pub fn evolution_kernels<'a>(profile: &'a TimeProfile, omega: &'a [f64]) -> (Box<Kernel<'a>>, Box<Kernel<'a>>) {
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let am = move |tp: f64, _sp: f64| profile.g_minus_at(tp).scale(c);
    let ap = move |tp: f64, sp: f64| {
        let df = (profile.f(tp) - profile.f(sp)).abs();
        let decay: Vec<f64> = omega.iter().map(|w| (-df * w).exp()).collect();
        profile.g_plus_at(sp).mul_modes(&decay).scale(c)
    };
    (Box::new(am), Box::new(ap))
}

/// Per-window data shared by all paths of one estimator run.
pub(crate) struct Prepared {
    k: Vec<[f64; 3]>,
    tw: Vec<f64>,
    half_dt: f64,
    heat_from_start: Vec<Vec<f64>>,
    step_decay: Vec<Vec<f64>>,
    g_minus: Vec<Vec<Complex64>>,
    g_plus: Vec<Vec<Complex64>>,
    tau: f64,
}

impl Prepared {
    /// Node data for `steps` uniform steps on `[s, t]`.
    pub(crate) fn new(grid: &ModeGrid, omega: &[f64], profile: &TimeProfile, s: f64, t: f64, steps: usize) -> Result<Self> {
        profile.check_modes(grid.len())?;
        let tg = TimeGrid::new(s, t, steps)?;
        let dt = tg.dt();
        let f: Vec<f64> = (0..=steps).map(|j| profile.f(tg.node(j))).collect();
        let decay_of = |df: f64| omega.iter().map(|w| (-df * w).exp()).collect::<Vec<f64>>();
        let heat_from_start = f.iter().map(|fj| decay_of(fj - f[0])).collect();
        let step_decay = (0..=steps).map(|j| if j == 0 { vec![1.0; omega.len()] } else { decay_of(f[j] - f[j - 1]) }).collect();
        let g_minus = (0..=steps).map(|j| profile.g_minus_at(tg.node(j)).into_inner()).collect();
        let g_plus = (0..=steps).map(|j| profile.g_plus_at(tg.node(j)).into_inner()).collect();
        Ok(Self {
            k: grid.momenta().to_vec(),
            tw: trapezoid_weights(steps, dt),
            half_dt: 0.5 * dt,
            heat_from_start,
            step_decay,
            g_minus,
            g_plus,
            tau: f[steps] - f[0],
        })
    }

    pub(crate) fn tau(&self) -> f64 {
        self.tau
    }

    /// `(u, U⁻, U⁺)` for phase positions `y_j`, one per node.
    pub(crate) fn evaluate(&self, y: &[[f64; 3]]) -> (Complex64, Vec<Complex64>, Vec<Complex64>) {
        let m = self.k.len();
        let mut u_minus = vec![ZERO; m];
        let mut acc = vec![ZERO; m];
        let mut prev_plus = vec![ZERO; m];
        let mut u = ZERO;
        for (j, yj) in y.iter().enumerate() {
            let ph = phases(&self.k, yj);
            let decay = &self.step_decay[j];
            let heat = &self.heat_from_start[j];
            let (gm, gp) = (&self.g_minus[j], &self.g_plus[j]);
            let tw = self.tw[j];
            let mut inner = ZERO;
            for i in 0..m {
                let ym = ph[i] * gm[i];
                let yp = ph[i] * gp[i];
                u_minus[i] += ym * (heat[i] * tw);
                acc[i] = if j == 0 {
                    ZERO
                } else {
                    (acc[i] + prev_plus[i] * self.half_dt) * decay[i] + yp * self.half_dt
                };
                prev_plus[i] = yp;
                inner += ym.conj() * acc[i];
            }
            u += inner * tw;
        }
        (u, u_minus, acc)
    }
}

/// Nested single-integral form `∫_s^t ⟨e^{−ik·X_r} g₋(r), U_{v_r⁺}(s, r)⟩ dr`
/// with positions `X_r − X_s`.
pub fn u_single_form(profile: &TimeProfile, s: f64, t: f64, path: &LevyPath, grid: &ModeGrid, omega: &[f64]) -> Result<Complex64> {
    let (a, b) = window_nodes(path, s, t)?;
    let prep = Prepared::new(grid, omega, profile, s, t, b - a)?;
    let y: Vec<[f64; 3]> = (a..=b).map(|j| rel(path, j, a)).collect();
    Ok(prep.evaluate(&y).0)
}

fn backward_positions(path: &LevyPath, a: usize, b: usize) -> Vec<[f64; 3]> {
    (a..=b).map(|j| rel(path, b, j)).collect()
}

/// Functionals entering the Feynman–Kac integrand of `model` under `profile`.
pub fn compute_nelson_functionals(model: &Model, profile: &TimeProfile, window: (f64, f64), path: &LevyPath) -> Result<PathFunctionals> {
    let (s, t) = window;
    let (a, b) = window_nodes(path, s, t)?;
    let prep = Prepared::new(model.grid(), model.omega(), profile, s, t, b - a)?;
    let (u, um, up) = prep.evaluate(&backward_positions(path, a, b));
    Ok(PathFunctionals {
        u,
        u_minus: OneBosonVector::new(um),
        u_plus: OneBosonVector::new(up),
        window,
        dt: path.grid().dt(),
        rule: QuadratureRule::Trapezoid,
    })
}

/// `e^u F_{τ/2}(U⁺) F_{τ/2}(U⁻)†` as a dense matrix, with `heat` the diagonal
/// of `e^{−τ dΓ(ω)}`.
pub(crate) fn w_matrix(basis: &FockBasis, u: Complex64, um: &[Complex64], up: &[Complex64], heat: &[f64]) -> DMatrix<Complex64> {
    let n = basis.len();
    let eu = u.exp();
    if n == 1 {
        return DMatrix::from_element(1, 1, eu * heat[0]);
    }
    let mut left = creation_exponential(basis, up);
    for (j, mut col) in left.column_iter_mut().enumerate() {
        col *= Complex64::new(heat[j], 0.0) * eu;
    }
    let right = creation_exponential(basis, um);
    left * right.adjoint()
}

/// Per-path Feynman–Kac operator without the phase factor.
pub fn assemble_w(
    functionals: &PathFunctionals,
    profile: &TimeProfile,
    model: &Model,
    basis: &Arc<FockBasis>,
    insertions: &[Complex64],
) -> Result<FockOperator> {
    model.check_basis(basis)?;
    let (s, t) = functionals.window;
    let tau = profile.f(t) - profile.f(s);
    if !(tau > 0.0) {
        return Err(invalid("F_t requires positive heat time f(t) − f(s)"));
    }
    if functionals.u_minus.len() != basis.num_modes() || functionals.u_plus.len() != basis.num_modes() {
        return Err(shape("functionals and basis mode counts differ"));
    }
    let heat = heat_diagonal(basis, tau, model.omega());
    let mut w = w_matrix(basis, functionals.u, functionals.u_minus.as_slice(), functionals.u_plus.as_slice(), &heat);
    let c: Complex64 = insertions.iter().product();
    if c != Complex64::new(1.0, 0.0) {
        w *= c;
    }
    FockOperator::from_dense(basis.clone(), w)
}

/// Scalar moment insertion evaluated on each path and window.
pub type Insertion = dyn Fn(&LevyPath, (f64, f64)) -> Result<Complex64> + Sync;

/// Monte Carlo parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the global pool.
    #[serde(default)]
    pub workers: usize,
    /// Paths per reduction block; part of the reproducibility contract.
    #[serde(default = "default_block")]
    pub block: usize,
}

fn default_block() -> usize {
    256
}

impl McParams {
    pub fn new(n_paths: usize, steps: usize, seed: u64) -> Self {
        Self { n_paths, steps, seed, workers: 0, block: default_block() }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(invalid("n_paths must be at least 1"));
        }
        if self.steps == 0 || self.block == 0 {
            return Err(invalid("steps and block must be positive"));
        }
        Ok(())
    }
}

/// Runs `f` over fixed index blocks on a pool of `workers` threads and
/// returns the block results in index order.
pub fn run_blocks<T, F>(n: usize, block: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<usize>) -> Result<T> + Sync,
{
    let nb = n.div_ceil(block);
    let job = || {
        (0..nb)
            .into_par_iter()
            .map(|b| f(b * block..((b + 1) * block).min(n)))
            .collect::<Result<Vec<T>>>()
    };
    if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(job)
    }
}

/// Plain per-block sums of a matrix-valued sample and auxiliary scalars.
#[derive(Debug, Clone)]
struct BlockSums {
    re: Vec<f64>,
    im: Vec<f64>,
    sq: Vec<f64>,
    action: Complex64,
    phase: Complex64,
}

impl BlockSums {
    fn new(n: usize) -> Self {
        Self { re: vec![0.0; n], im: vec![0.0; n], sq: vec![0.0; n], action: ZERO, phase: ZERO }
    }

    fn push(&mut self, m: &DMatrix<Complex64>) {
        for (i, c) in m.iter().enumerate() {
            self.re[i] += c.re;
            self.im[i] += c.im;
            self.sq[i] += c.norm_sqr();
        }
    }
}

/// Compensated in-order merge of block sums.
struct Totals {
    re: Vec<Neumaier>,
    im: Vec<Neumaier>,
    sq: Vec<Neumaier>,
    action: [Neumaier; 2],
    phase: [Neumaier; 2],
}

impl Totals {
    fn new(n: usize) -> Self {
        Self {
            re: vec![Neumaier::default(); n],
            im: vec![Neumaier::default(); n],
            sq: vec![Neumaier::default(); n],
            action: Default::default(),
            phase: Default::default(),
        }
    }

    fn merge(&mut self, b: &BlockSums) {
        for i in 0..self.re.len() {
            self.re[i].add(b.re[i]);
            self.im[i].add(b.im[i]);
            self.sq[i].add(b.sq[i]);
        }
        self.action[0].add(b.action.re);
        self.action[1].add(b.action.im);
        self.phase[0].add(b.phase.re);
        self.phase[1].add(b.phase.im);
    }

    fn finish(&self, dim: usize, n_paths: usize, scale: f64) -> (DMatrix<Complex64>, DMatrix<f64>, Complex64, Complex64) {
        let n = n_paths as f64;
        let mut mean = DMatrix::zeros(dim, dim);
        let mut se = DMatrix::zeros(dim, dim);
        for i in 0..dim * dim {
            let mu = Complex64::new(self.re[i].value() / n, self.im[i].value() / n);
            let var = if n_paths > 1 { ((self.sq[i].value() - n * mu.norm_sqr()) / (n - 1.0)).max(0.0) } else { 0.0 };
            mean[i] = mu * scale;
            se[i] = (var / n).sqrt() * scale.abs();
        }
        let action = Complex64::new(self.action[0].value(), self.action[1].value()) / n;
        let phase = Complex64::new(self.phase[0].value(), self.phase[1].value()) / n;
        (mean, se, action, phase)
    }
}

/// Monte Carlo estimate of a propagator.
#[derive(Debug, Clone)]
pub struct SemigroupEstimate {
    pub mean: FockOperator,
    /// Per-entry standard error `√((Var Re + Var Im)/n)`.
    pub standard_error: DMatrix<f64>,
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub fingerprint: String,
    pub window: (f64, f64),
    pub momentum: Vec<f64>,
    /// Sample mean of `e^u`.
    pub action_mean: Complex64,
    /// Sample mean of `e^{iP·(X_t − X_s)}`.
    pub phase_mean: Complex64,
    /// Energy shift `E_Λ` folded into the weights (zero if none).
    pub energy_shift: f64,
}

/// Metadata document of a [`SemigroupEstimate`].
#[derive(Debug, Clone, Serialize)]
pub struct EstimateMeta<'a> {
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub window: [f64; 2],
    pub momentum: &'a [f64],
    pub num_modes: usize,
    pub max_bosons: usize,
    pub dim: usize,
    pub action_mean: [f64; 2],
    pub phase_mean: [f64; 2],
    pub energy_shift: f64,
    pub model: serde_json::Value,
}

impl SemigroupEstimate {
    pub fn basis(&self) -> &Arc<FockBasis> {
        self.mean.basis()
    }

    pub fn meta(&self) -> EstimateMeta<'_> {
        EstimateMeta {
            n_paths: self.n_paths,
            steps: self.steps,
            seed: self.seed,
            window: [self.window.0, self.window.1],
            momentum: &self.momentum,
            num_modes: self.basis().num_modes(),
            max_bosons: self.basis().max_bosons(),
            dim: self.basis().len(),
            action_mean: [self.action_mean.re, self.action_mean.im],
            phase_mean: [self.phase_mean.re, self.phase_mean.im],
            energy_shift: self.energy_shift,
            model: serde_json::from_str(&self.fingerprint).unwrap_or(serde_json::Value::String(self.fingerprint.clone())),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta()).expect("estimate metadata serializes")
    }

    /// CSV tables `(mean_re, mean_im, std_err)`; row/column = basis index.
    pub fn to_csv(&self) -> (String, String, String) {
        let m = self.mean.to_dense();
        (
            crate::io::matrix_csv(m.nrows(), |i, j| m[(i, j)].re),
            crate::io::matrix_csv(m.nrows(), |i, j| m[(i, j)].im),
            crate::io::matrix_csv(m.nrows(), |i, j| self.standard_error[(i, j)]),
        )
    }

    /// Vacuum-to-vacuum entry.
    pub fn vacuum(&self) -> Complex64 {
        self.mean.entry(0, 0)
    }
}

fn check_window(window: (f64, f64)) -> Result<()> {
    if !(window.0 >= 0.0 && window.1 > window.0 && window.1.is_finite()) {
        return Err(invalid(format!("window needs 0 ≤ s < t, got [{}, {}]", window.0, window.1)));
    }
    Ok(())
}

fn phase_column_factors(k_tot: &[[f64; 3]], p: &[f64; 3], dx: &[f64; 3]) -> Vec<Complex64> {
    k_tot
        .iter()
        .map(|kn| {
            let arg = (p[0] - kn[0]) * dx[0] + (p[1] - kn[1]) * dx[1] + (p[2] - kn[2]) * dx[2];
            Complex64::new(arg.cos(), arg.sin())
        })
        .collect()
}

/// `E[W · e^{i(P − dΓ(p̂))·(X_t − X_s)}]` by Monte Carlo.
pub fn mc_semigroup(
    model: &Model,
    profile: &TimeProfile,
    basis: &Arc<FockBasis>,
    p: &[f64],
    window: (f64, f64),
    params: &McParams,
) -> Result<SemigroupEstimate> {
    Ok(mc_semigroup_levels(model, profile, basis, p, window, params, &[params.steps], &[])?.remove(0))
}

/// Estimates at several step counts from the same paths.
///
/// Paths are sampled at the largest step count and coarsened for the others,
/// so differences between levels isolate the quadrature error.
#[allow(clippy::too_many_arguments)]
pub fn mc_semigroup_levels(
    model: &Model,
    profile: &TimeProfile,
    basis: &Arc<FockBasis>,
    p: &[f64],
    window: (f64, f64),
    params: &McParams,
    steps: &[usize],
    insertions: &[&Insertion],
) -> Result<Vec<SemigroupEstimate>> {
    params.validate()?;
    check_window(window)?;
    model.check_basis(basis)?;
    let p3 = model.momentum3(p)?;
    let fine = *steps.iter().max().ok_or_else(|| invalid("no step counts"))?;
    if steps.iter().any(|&j| j == 0 || fine % j != 0) {
        return Err(invalid("every step count must divide the largest"));
    }
    let (s, t) = window;
    let preps: Vec<Prepared> = steps
        .iter()
        .map(|&j| Prepared::new(model.grid(), model.omega(), profile, s, t, j))
        .collect::<Result<_>>()?;
    let tau = preps[0].tau();
    if !(tau > 0.0) {
        return Err(invalid("heat time f(t) − f(s) must be positive"));
    }
    let heat = heat_diagonal(basis, tau, model.omega());
    let k_tot = basis.total_momenta(model.grid())?;
    let dim = basis.len();
    let levy = model.levy();
    let fine_grid = TimeGrid::new(s, t, fine)?;

    let blocks = run_blocks(params.n_paths, params.block, params.workers, |range| {
        let mut sums: Vec<BlockSums> = steps.iter().map(|_| BlockSums::new(dim * dim)).collect();
        for idx in range {
            let path = sample_path(&levy, &fine_grid, params.seed, idx as u64)?;
            let dx = path.position3(fine);
            let ph = phase_column_factors(&k_tot, &p3, &dx);
            let phase0 = Complex64::new(0.0, p3[0] * dx[0] + p3[1] * dx[1] + p3[2] * dx[2]).exp();
            for (lvl, (&j, prep)) in steps.iter().zip(&preps).enumerate() {
                let coarse;
                let path_j = if j == fine {
                    &path
                } else {
                    coarse = path.coarsen(fine / j)?;
                    &coarse
                };
                let (u, um, up) = prep.evaluate(&backward_positions(path_j, 0, j));
                let mut w = w_matrix(basis, u, &um, &up, &heat);
                let mut c = Complex64::new(1.0, 0.0);
                for ins in insertions {
                    c *= ins(path_j, window)?;
                }
                for (col, mut column) in w.column_iter_mut().enumerate() {
                    column *= ph[col] * c;
                }
                sums[lvl].push(&w);
                sums[lvl].action += u.exp();
                sums[lvl].phase += phase0;
            }
        }
        Ok(sums)
    })?;

    steps
        .iter()
        .enumerate()
        .map(|(lvl, &j)| {
            let mut tot = Totals::new(dim * dim);
            for b in &blocks {
                tot.merge(&b[lvl]);
            }
            let (mean, se, action, phase) = tot.finish(dim, params.n_paths, 1.0);
            Ok(SemigroupEstimate {
                mean: FockOperator::from_dense(basis.clone(), mean)?,
                standard_error: se,
                n_paths: params.n_paths,
                steps: j,
                seed: params.seed,
                fingerprint: model.fingerprint(),
                window,
                momentum: p.to_vec(),
                action_mean: action,
                phase_mean: phase,
                energy_shift: 0.0,
            })
        })
        .collect()
}

/// Estimates of `e^{−(t−s)(H_Λ − E_Λ)}` for a family of cutoffs, all driven
/// by the same paths. Each path is weighted by `e^{u_Λ + (t−s)E_Λ}`.
pub fn mc_semigroup_renormalized(
    models: &[Model],
    max_bosons: usize,
    p: &[f64],
    window: (f64, f64),
    params: &McParams,
) -> Result<Vec<SemigroupEstimate>> {
    params.validate()?;
    check_window(window)?;
    let first = models.first().ok_or_else(|| invalid("empty model family"))?;
    let levy: LevyProcessSpec = first.levy();
    if models.iter().any(|m| m.levy() != levy) {
        return Err(invalid("all models of a family must share the driving process"));
    }
    let p3 = first.momentum3(p)?;
    let (s, t) = window;
    struct Member {
        basis: Arc<FockBasis>,
        prep: Prepared,
        heat: Vec<f64>,
        k_tot: Vec<[f64; 3]>,
        shift: f64,
    }
    let members: Vec<Member> = models
        .iter()
        .map(|m| {
            let basis = enumerate_basis(m.num_modes(), max_bosons)?;
            let profile = TimeProfile::nelson(m);
            let prep = Prepared::new(m.grid(), m.omega(), &profile, s, t, params.steps)?;
            let heat = heat_diagonal(&basis, t - s, m.omega());
            let k_tot = basis.total_momenta(m.grid())?;
            let e = renorm_energy(m, RenormMethod::GridSum)?;
            Ok(Member { basis, prep, heat, k_tot, shift: e })
        })
        .collect::<Result<_>>()?;
    let grid = TimeGrid::new(s, t, params.steps)?;
    let blocks = run_blocks(params.n_paths, params.block, params.workers, |range| {
        let mut sums: Vec<BlockSums> = members.iter().map(|m| BlockSums::new(m.basis.len().pow(2))).collect();
        for idx in range {
            let path = sample_path(&levy, &grid, params.seed, idx as u64)?;
            let dx = path.position3(params.steps);
            let y = backward_positions(&path, 0, params.steps);
            let phase0 = Complex64::new(0.0, p3[0] * dx[0] + p3[1] * dx[1] + p3[2] * dx[2]).exp();
            for (m, sum) in members.iter().zip(sums.iter_mut()) {
                let (u, um, up) = m.prep.evaluate(&y);
                let shifted = u + (t - s) * m.shift;
                let mut w = w_matrix(&m.basis, shifted, &um, &up, &m.heat);
                let ph = phase_column_factors(&m.k_tot, &p3, &dx);
                for (col, mut column) in w.column_iter_mut().enumerate() {
                    column *= ph[col];
                }
                sum.push(&w);
                sum.action += shifted.exp();
                sum.phase += phase0;
            }
        }
        Ok(sums)
    })?;
    members
        .iter()
        .zip(models)
        .enumerate()
        .map(|(i, (m, model))| {
            let dim = m.basis.len();
            let mut tot = Totals::new(dim * dim);
            for b in &blocks {
                tot.merge(&b[i]);
            }
            let (mean, se, action, phase) = tot.finish(dim, params.n_paths, 1.0);
            Ok(SemigroupEstimate {
                mean: FockOperator::from_dense(m.basis.clone(), mean)?,
                standard_error: se,
                n_paths: params.n_paths,
                steps: params.steps,
                seed: params.seed,
                fingerprint: model.fingerprint(),
                window,
                momentum: p.to_vec(),
                action_mean: action,
                phase_mean: phase,
                energy_shift: m.shift,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{enumerate_basis, heat_diagonal};
    use crate::model::{BosonDispersion, CouplingSpec, ParticleDispersion};

    fn one_mode(lambda: f64, k: f64, m: f64) -> Model {
        let grid = ModeGrid::from_cells(1, vec![(vec![k], 1.0)]).unwrap();
        Model::new(
            ParticleDispersion::NonRel,
            BosonDispersion::Massive { m },
            CouplingSpec::NelsonUV { lambda, cutoff: None },
            grid,
        )
        .unwrap()
    }

    fn still(steps: usize, t: f64) -> LevyPath {
        LevyPath::constant(LevyProcessSpec::BrownianNR { d: 1 }, TimeGrid::new(0.0, t, steps).unwrap()).unwrap()
    }

    #[test]
    fn compute_u_on_constants() {
        let g = ModeGrid::from_cells(1, vec![(vec![0.5], 1.0), (vec![-0.5], 1.0)]).unwrap();
        let path = still(7, 1.4);
        let v = OneBosonVector::from_real(&[0.3, -1.2]);
        let u = compute_u(&|_| v.clone(), 0.0, 1.4, &path, &g).unwrap();
        for (a, b) in u.as_slice().iter().zip(v.as_slice()) {
            assert!((a - b * 1.4).norm() < 1e-14);
        }
        let z = compute_u(&|_| OneBosonVector::zeros(2), 0.0, 1.4, &path, &g).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert!(matches!(compute_u(&|_| v.clone(), 0.0, 1.5, &path, &g), Err(Error::Window { .. })));
        assert!(compute_u(&|_| v.clone(), 0.2, 0.2, &path, &g).is_err());
    }

    #[test]
    fn double_form_on_constants() {
        let g = ModeGrid::from_cells(1, vec![(vec![0.5], 1.0), (vec![-0.5], 1.0)]).unwrap();
        let path = still(5, 2.0);
        let am = OneBosonVector::new(vec![Complex64::new(0.2, 0.1), Complex64::new(-0.4, 0.0)]);
        let ap = OneBosonVector::new(vec![Complex64::new(1.0, -0.3), Complex64::new(0.5, 0.5)]);
        let u = compute_u_double(&|_, _| am.clone(), &|_, _| ap.clone(), 0.0, 2.0, &path, &g).unwrap();
        assert!((u - am.inner(&ap) * 4.0).norm() < 1e-13);
        let z = compute_u_double(&|_, _| OneBosonVector::zeros(2), &|_, _| ap.clone(), 0.0, 2.0, &path, &g).unwrap();
        assert_eq!(z, ZERO);
    }

    #[test]
    fn single_mode_closed_form() {
        let (v, k, t) = (-0.7, 0.8, 1.3);
        let model = one_mode(v, k, 0.6);
        let w = model.omega()[0];
        let vc = model.coupling_vector().as_slice()[0].re;
        let profile = TimeProfile::nelson(&model);
        let exact = vc * vc * (t / w - (1.0 - (-w * t).exp()) / (w * w));
        let mut errs = vec![];
        for steps in [32, 64, 128] {
            let f = compute_nelson_functionals(&model, &profile, (0.0, t), &still(steps, t)).unwrap();
            assert!(f.u.im.abs() < 1e-15);
            errs.push((f.u.re - exact).abs());
        }
        assert!(errs[2] < 1e-4 * exact.abs());
        let ratio = errs[1] / errs[2];
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        // X ≡ 0: U⁻ and U⁺ are the Laplace integrals of g = −v
        let f = compute_nelson_functionals(&model, &profile, (0.0, t), &still(4096, t)).unwrap();
        let lap = -vc * (1.0 - (-w * t).exp()) / w;
        assert!((f.u_minus.as_slice()[0].re - lap).abs() < 1e-7);
        assert!((f.u_plus.as_slice()[0].re - lap).abs() < 1e-7);
    }

    #[test]
    fn zero_coupling_gives_zero_functionals() {
        let model = one_mode(0.0, 0.8, 1.0);
        let f = compute_nelson_functionals(&model, &TimeProfile::nelson(&model), (0.0, 1.0), &still(8, 1.0)).unwrap();
        assert_eq!(f.u, ZERO);
        assert_eq!(f.u_minus.norm() + f.u_plus.norm(), 0.0);
    }

    #[test]
    fn assemble_w_reduces_to_heat() {
        let model = one_mode(0.0, 0.8, 1.0);
        let b = enumerate_basis(1, 3).unwrap();
        let f = PathFunctionals {
            u: ZERO,
            u_minus: OneBosonVector::zeros(1),
            u_plus: OneBosonVector::zeros(1),
            window: (0.0, 1.5),
            dt: 0.1,
            rule: QuadratureRule::Trapezoid,
        };
        let profile = TimeProfile::nelson(&model);
        let w = assemble_w(&f, &profile, &model, &b, &[]).unwrap();
        let heat = heat_diagonal(&b, 1.5, model.omega());
        for s in 0..b.len() {
            assert!((w.entry(s, s).re - heat[s]).abs() < 1e-15);
        }
        let c = Complex64::new(0.3, -2.0);
        let w2 = assemble_w(&f, &profile, &model, &b, &[c]).unwrap();
        assert!(w2.max_entry_distance(&w.scale(c)).unwrap() < 1e-15);
        let bad = PathFunctionals { window: (1.0, 1.0), ..f };
        assert!(assemble_w(&bad, &profile, &model, &b, &[]).is_err());
    }

    #[test]
    fn block_runner_is_ordered() {
        let out = run_blocks(10, 3, 2, |r| Ok(r.start)).unwrap();
        assert_eq!(out, vec![0, 3, 6, 9]);
    }
}
