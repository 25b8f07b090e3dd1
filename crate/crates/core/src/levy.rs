//! Lévy processes driving the path integral.
//!
//! * `BrownianNR`: Brownian motion, `E[e^{ik·X_t}] = e^{−t|k|²/2}`.
//! * `RelativisticSR`: Brownian motion time-changed by an inverse Gaussian
//!   subordinator, `E[e^{ik·X_t}] = e^{−t(√(|k|²+M²) − M)}`. At `M = 0` the
//!   increments are isotropic Cauchy.
//!
//! Paths are sampled on the nodes of a uniform [`TimeGrid`]. Each path owns
//! a ChaCha8 stream selected by `(seed, path_index)`, so any subset of paths
//! can be regenerated independently and in any order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::stats::{ks_two_sample, Neumaier};

/// The two driving processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum LevyProcessSpec {
    BrownianNR { d: usize },
    RelativisticSR {
        d: usize,
        #[serde(rename = "M")]
        mass: f64,
    },
}

impl LevyProcessSpec {
    pub fn dim(&self) -> usize {
        match *self {
            LevyProcessSpec::BrownianNR { d } | LevyProcessSpec::RelativisticSR { d, .. } => d,
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(1..=3).contains(&d) {
            return Err(invalid(format!("process dimension must be 1, 2 or 3, got {d}")));
        }
        if let LevyProcessSpec::RelativisticSR { mass, .. } = *self {
            if !(mass >= 0.0 && mass.is_finite()) {
                return Err(invalid("relativistic mass must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Characteristic exponent `Ψ(k)` with `E[e^{ik·X_t}] = e^{−tΨ(k)}`.
pub fn char_exponent(spec: &LevyProcessSpec, k: &[f64]) -> f64 {
    let r2: f64 = k.iter().map(|x| x * x).sum();
    match *spec {
        LevyProcessSpec::BrownianNR { .. } => 0.5 * r2,
        LevyProcessSpec::RelativisticSR { mass, .. } => r2 / ((r2 + mass * mass).sqrt() + mass),
    }
}

/// Uniform grid `t_j = s + jΔt`, `j = 0..=J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, steps: usize) -> Result<Self> {
        if !(start >= 0.0) || !(end > start) || !end.is_finite() {
            return Err(invalid(format!("time grid needs 0 ≤ s < t, got [{start}, {end}]")));
        }
        if steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self { start, end, steps })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.steps {
            self.end
        } else {
            self.start + j as f64 * self.dt()
        }
    }

    /// Index of the node at time `t`, if `t` is a node.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.start) / self.dt();
        let j = x.round();
        if j < 0.0 || j > self.steps as f64 || (x - j).abs() > 1e-9 {
            None
        } else {
            Some(j as usize)
        }
    }
}

/// Positions of a sample path on the grid nodes, `X_{t_0} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    spec: LevyProcessSpec,
    grid: TimeGrid,
    positions: Vec<[f64; 3]>,
    seed: Option<u64>,
    path_index: Option<u64>,
}

impl LevyPath {
    /// Deterministic path given node by node.
    pub fn from_positions(spec: LevyProcessSpec, grid: TimeGrid, positions: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        if positions.len() != grid.steps + 1 {
            return Err(shape(format!("{} positions for {} nodes", positions.len(), grid.steps + 1)));
        }
        let mut out = Vec::with_capacity(positions.len());
        for x in &positions {
            if x.len() != spec.dim() {
                return Err(shape("position dimension differs from the process dimension"));
            }
            let mut p = [0.0; 3];
            p[..x.len()].copy_from_slice(x);
            out.push(p);
        }
        if out[0] != [0.0; 3] {
            return Err(invalid("a path must start at the origin"));
        }
        Ok(Self { spec, grid, positions: out, seed: None, path_index: None })
    }

    /// The constant path `X ≡ 0`.
    pub fn constant(spec: LevyProcessSpec, grid: TimeGrid) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, grid, positions: vec![[0.0; 3]; grid.steps + 1], seed: None, path_index: None })
    }

    pub fn spec(&self) -> &LevyProcessSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j][..self.spec.dim()]
    }

    pub(crate) fn position3(&self, j: usize) -> [f64; 3] {
        self.positions[j]
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn path_index(&self) -> Option<u64> {
        self.path_index
    }

    /// Every `factor`-th node of the path.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.grid.steps % factor != 0 {
            return Err(invalid(format!("cannot coarsen {} steps by {factor}", self.grid.steps)));
        }
        let grid = TimeGrid::new(self.grid.start, self.grid.end, self.grid.steps / factor)?;
        Ok(Self {
            spec: self.spec,
            grid,
            positions: self.positions.iter().step_by(factor).copied().collect(),
            seed: self.seed,
            path_index: self.path_index,
        })
    }

    /// CSV dump with columns `j, t_j, x_1, …, x_d`.
    pub fn to_csv(&self) -> String {
        let d = self.spec.dim();
        let mut s = String::from("j,t");
        for a in 0..d {
            s.push_str(&format!(",x{}", a + 1));
        }
        s.push('\n');
        for (j, x) in self.positions.iter().enumerate() {
            s.push_str(&format!("{},{}", j, self.grid.node(j)));
            for xa in &x[..d] {
                s.push_str(&format!(",{xa}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Random stream of path `path_index` under master seed `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Draws a path on `grid`, a pure function of `(seed, path_index)`.
pub fn sample_path(spec: &LevyProcessSpec, grid: &TimeGrid, seed: u64, path_index: u64) -> Result<LevyPath> {
    spec.validate()?;
    let mut rng = path_rng(seed, path_index);
    let dt = grid.dt();
    let mut positions = Vec::with_capacity(grid.steps + 1);
    let mut x = [0.0; 3];
    positions.push(x);
    for _ in 0..grid.steps {
        let dx = sample_increment(spec, dt, &mut rng);
        for a in 0..3 {
            x[a] += dx[a];
        }
        positions.push(x);
    }
    Ok(LevyPath { spec: *spec, grid: *grid, positions, seed: Some(seed), path_index: Some(path_index) })
}

/// One increment `X_{t+Δt} − X_t`.
pub fn sample_increment<R: Rng + ?Sized>(spec: &LevyProcessSpec, dt: f64, rng: &mut R) -> [f64; 3] {
    let d = spec.dim();
    let mut z = [0.0; 3];
    for za in z.iter_mut().take(d) {
        *za = rng.sample(StandardNormal);
    }
    let scale = match *spec {
        LevyProcessSpec::BrownianNR { .. } => dt.sqrt(),
        LevyProcessSpec::RelativisticSR { mass, .. } if mass > 0.0 => ig_subordinator_increment(mass, dt, rng).sqrt(),
        LevyProcessSpec::RelativisticSR { .. } => {
            let y: f64 = rng.sample(StandardNormal);
            dt / y.abs()
        }
    };
    for za in z.iter_mut().take(d) {
        *za *= scale;
    }
    z
}

/// Inverse Gaussian draw with mean `dt/M` and shape `dt²`, i.e. Laplace
/// transform `e^{−dt(√(2u+M²) − M)}`, by transformation with one rejection
/// step (Michael, Schucany and Haas).
pub fn ig_subordinator_increment<R: Rng + ?Sized>(mass: f64, dt: f64, rng: &mut R) -> f64 {
    debug_assert!(mass > 0.0 && dt > 0.0);
    let mu = dt / mass;
    let shape = dt * dt;
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    let my = mu * y;
    // x = μ + μ²y/(2λ) − (μ/2λ)√(4μλy + μ²y²), rewritten without cancellation
    let x = mu - 2.0 * mu * my / (my + (my * my + 4.0 * mu * shape * y).sqrt());
    let x = if x > 0.0 { x } else { f64::MIN_POSITIVE };
    let u: f64 = rng.random();
    if u * (mu + x) <= mu {
        x
    } else {
        mu * mu / x
    }
}

/// One row of an empirical characteristic-function test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharTestRow {
    pub time: f64,
    pub mean: Complex64,
    pub std_err: f64,
    pub target: f64,
    pub z: f64,
}

/// Two-time product test of `E[e^{ik₁·X_{t₁}} e^{ik₂·X_{t₂}}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoTimeRow {
    pub t1: f64,
    pub t2: f64,
    pub mean: Complex64,
    pub std_err: f64,
    pub target: f64,
    pub z: f64,
}

/// Output of [`empirical_char_test`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharTestReport {
    pub k: Vec<f64>,
    pub n_samples: usize,
    pub rows: Vec<CharTestRow>,
    /// `k₁ = k₂ = k` at the first two times, when at least two are given.
    pub two_time: Option<TwoTimeRow>,
}

impl CharTestReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.z)
            .chain(self.two_time.map(|r| r.z))
            .fold(0.0, f64::max)
    }
}

struct ComplexMoments {
    re: Neumaier,
    im: Neumaier,
    sq: Neumaier,
    n: usize,
}

impl ComplexMoments {
    fn new() -> Self {
        Self { re: Neumaier::default(), im: Neumaier::default(), sq: Neumaier::default(), n: 0 }
    }

    fn push(&mut self, c: Complex64) {
        self.re.add(c.re);
        self.im.add(c.im);
        self.sq.add(c.norm_sqr());
        self.n += 1;
    }

    /// Mean and its standard error `√(Var Re + Var Im)/√n`.
    fn finish(&self) -> (Complex64, f64) {
        let n = self.n as f64;
        let mean = Complex64::new(self.re.value() / n, self.im.value() / n);
        let var = ((self.sq.value() - n * mean.norm_sqr()) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

fn z_score(mean: Complex64, target: f64, se: f64) -> f64 {
    let dev = (mean - Complex64::new(target, 0.0)).norm();
    if dev == 0.0 {
        0.0
    } else {
        dev / se
    }
}

fn dot(k: &[f64], x: &[f64; 3]) -> f64 {
    k.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Monte Carlo check of `E[e^{ik·X_t}] = e^{−tΨ(k)}` at several times.
pub fn empirical_char_test(
    spec: &LevyProcessSpec,
    k: &[f64],
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<CharTestReport> {
    spec.validate()?;
    if n_samples < 100 {
        return Err(invalid("n_samples must be at least 100"));
    }
    if k.len() != spec.dim() {
        return Err(shape("k dimension differs from the process dimension"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("times must be positive"));
    }
    let mut single: Vec<ComplexMoments> = times.iter().map(|_| ComplexMoments::new()).collect();
    let mut pair = ComplexMoments::new();
    let mut x_at = vec![[0.0; 3]; times.len()];
    for i in 0..n_samples {
        let mut rng = path_rng(seed, i as u64);
        let mut x = [0.0; 3];
        let mut t_prev = 0.0;
        for &idx in &order {
            let dt = times[idx] - t_prev;
            if dt > 0.0 {
                let dx = sample_increment(spec, dt, &mut rng);
                for a in 0..3 {
                    x[a] += dx[a];
                }
            }
            t_prev = times[idx];
            x_at[idx] = x;
        }
        for (m, xt) in single.iter_mut().zip(&x_at) {
            m.push(Complex64::from_polar(1.0, dot(k, xt)));
        }
        if times.len() >= 2 {
            pair.push(Complex64::from_polar(1.0, dot(k, &x_at[0]) + dot(k, &x_at[1])));
        }
    }
    let rows = times
        .iter()
        .zip(&single)
        .map(|(&t, m)| {
            let (mean, se) = m.finish();
            let target = (-t * char_exponent(spec, k)).exp();
            CharTestRow { time: t, mean, std_err: se, target, z: z_score(mean, target, se) }
        })
        .collect();
    let two_time = (times.len() >= 2).then(|| {
        let (mean, se) = pair.finish();
        let target = two_time_target(spec, k, k, times[0], times[1]);
        TwoTimeRow { t1: times[0], t2: times[1], mean, std_err: se, target, z: z_score(mean, target, se) }
    });
    Ok(CharTestReport { k: k.to_vec(), n_samples, rows, two_time })
}

/// `E[e^{ik₁·X_{t₁}} e^{ik₂·X_{t₂}}]` from independent stationary increments.
pub fn two_time_target(spec: &LevyProcessSpec, k1: &[f64], k2: &[f64], t1: f64, t2: f64) -> f64 {
    let (a, b, ka, kb) = if t1 <= t2 { (t1, t2, k1, k2) } else { (t2, t1, k2, k1) };
    let sum: Vec<f64> = ka.iter().zip(kb).map(|(x, y)| x + y).collect();
    (-a * char_exponent(spec, &sum) - (b - a) * char_exponent(spec, kb)).exp()
}

/// Monte Carlo check of the two-time product identity.
pub fn two_time_test(
    spec: &LevyProcessSpec,
    k1: &[f64],
    k2: &[f64],
    t1: f64,
    t2: f64,
    n_samples: usize,
    seed: u64,
) -> Result<TwoTimeRow> {
    spec.validate()?;
    if k1.len() != spec.dim() || k2.len() != spec.dim() {
        return Err(shape("k dimension differs from the process dimension"));
    }
    if !(t1 > 0.0 && t2 > t1) {
        return Err(invalid("two-time test needs 0 < t1 < t2"));
    }
    let mut m = ComplexMoments::new();
    for i in 0..n_samples {
        let mut rng = path_rng(seed, i as u64);
        let x1 = sample_increment(spec, t1, &mut rng);
        let dx = sample_increment(spec, t2 - t1, &mut rng);
        let x2 = [x1[0] + dx[0], x1[1] + dx[1], x1[2] + dx[2]];
        m.push(Complex64::from_polar(1.0, dot(k1, &x1) + dot(k2, &x2)));
    }
    let (mean, se) = m.finish();
    let target = two_time_target(spec, k1, k2, t1, t2);
    Ok(TwoTimeRow { t1, t2, mean, std_err: se, target, z: z_score(mean, target, se) })
}

/// Sample mean and Laplace transform of the inverse-Gaussian subordinator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IgReport {
    pub mass: f64,
    pub dt: f64,
    pub u: f64,
    pub n_samples: usize,
    pub mean: f64,
    pub mean_std_err: f64,
    pub mean_target: f64,
    pub mean_z: f64,
    pub laplace: f64,
    pub laplace_std_err: f64,
    pub laplace_target: f64,
    pub laplace_z: f64,
    pub min_sample: f64,
}

/// Checks `E[S] = dt/M` and `E[e^{−uS}] = e^{−dt(√(2u+M²)−M)}`.
pub fn ig_moment_test(mass: f64, dt: f64, u: f64, n_samples: usize, seed: u64) -> Result<IgReport> {
    if !(mass > 0.0 && dt > 0.0 && u >= 0.0) || n_samples < 2 {
        return Err(invalid("IG test needs M > 0, dt > 0, u ≥ 0 and at least two samples"));
    }
    let (mut s1, mut s2, mut l1, mut l2) = (Neumaier::default(), Neumaier::default(), Neumaier::default(), Neumaier::default());
    let mut min_sample = f64::INFINITY;
    for i in 0..n_samples {
        let x = ig_subordinator_increment(mass, dt, &mut path_rng(seed, i as u64));
        let l = (-u * x).exp();
        s1.add(x);
        s2.add(x * x);
        l1.add(l);
        l2.add(l * l);
        min_sample = min_sample.min(x);
    }
    let n = n_samples as f64;
    let moments = |a: &Neumaier, b: &Neumaier| {
        let m = a.value() / n;
        (m, (((b.value() - n * m * m) / (n - 1.0)).max(0.0) / n).sqrt())
    };
    let (mean, mean_std_err) = moments(&s1, &s2);
    let (laplace, laplace_std_err) = moments(&l1, &l2);
    let mean_target = dt / mass;
    let laplace_target = (-dt * ((2.0 * u + mass * mass).sqrt() - mass)).exp();
    Ok(IgReport {
        mass,
        dt,
        u,
        n_samples,
        mean,
        mean_std_err,
        mean_target,
        mean_z: (mean - mean_target).abs() / mean_std_err,
        laplace,
        laplace_std_err,
        laplace_target,
        laplace_z: (laplace - laplace_target).abs() / laplace_std_err,
        min_sample,
    })
}

/// Kolmogorov–Smirnov comparison of first-coordinate increments over the
/// windows `[t_a, t_a + Δ]` and `[t_b, t_b + Δ]` of the same sampled paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n_samples: usize,
}

pub fn stationarity_test(
    spec: &LevyProcessSpec,
    grid: &TimeGrid,
    window_a: usize,
    window_b: usize,
    width: usize,
    n_samples: usize,
    seed: u64,
) -> Result<StationarityReport> {
    if window_a + width > window_b || window_b + width > grid.steps() {
        return Err(invalid("windows must be disjoint and inside the grid"));
    }
    let mut a = Vec::with_capacity(n_samples);
    let mut b = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let p = sample_path(spec, grid, seed, i as u64)?;
        a.push(p.positions[window_a + width][0] - p.positions[window_a][0]);
        b.push(p.positions[window_b + width][0] - p.positions[window_b][0]);
    }
    let (statistic, p_value) = ks_two_sample(&a, &b);
    Ok(StationarityReport { statistic, p_value, n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rules() {
        assert!(TimeGrid::new(1.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        let g = TimeGrid::new(0.5, 1.5, 4).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.node(4), 1.5);
        assert_eq!(g.node_index(1.0), Some(2));
        assert_eq!(g.node_index(1.1), None);
    }

    #[test]
    fn exponent_examples() {
        let bm = LevyProcessSpec::BrownianNR { d: 3 };
        assert_eq!(char_exponent(&bm, &[0.0; 3]), 0.0);
        assert!(((-2.0 * char_exponent(&bm, &[1.0, 0.0, 0.0])).exp() - 0.367879).abs() < 1e-6);
        let sr = LevyProcessSpec::RelativisticSR { d: 2, mass: 3.0 };
        assert!((char_exponent(&sr, &[4.0, 0.0]) - 2.0).abs() < 1e-15);
        for spec in [bm, LevyProcessSpec::RelativisticSR { d: 3, mass: 0.7 }] {
            for i in 0..50 {
                let k = [0.37 * i as f64, -0.2 * i as f64, 0.05];
                let psi = char_exponent(&spec, &k);
                assert!(psi >= 0.0 && psi.is_finite());
            }
        }
    }

    #[test]
    fn determinism() {
        let spec = LevyProcessSpec::RelativisticSR { d: 2, mass: 1.0 };
        let g = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let a = sample_path(&spec, &g, 7, 3).unwrap();
        let b = sample_path(&spec, &g, 7, 3).unwrap();
        let c = sample_path(&spec, &g, 7, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.position(0), &[0.0, 0.0]);
        let coarse = a.coarsen(4).unwrap();
        assert_eq!(coarse.position(4), a.position(16));
        assert_eq!(coarse.position(1), a.position(4));
        assert!(a.coarsen(3).is_err());
    }

    #[test]
    fn injected_paths() {
        let spec = LevyProcessSpec::BrownianNR { d: 1 };
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(LevyPath::from_positions(spec, g, vec![vec![0.0], vec![1.0]]).is_err());
        assert!(LevyPath::from_positions(spec, g, vec![vec![1.0], vec![1.0], vec![0.0]]).is_err());
        let p = LevyPath::from_positions(spec, g, vec![vec![0.0], vec![1.0], vec![0.5]]).unwrap();
        assert!(p.to_csv().starts_with("j,t,x1\n0,0,0\n1,0.5,1\n"));
    }

    #[test]
    fn ig_is_positive() {
        let mut rng = path_rng(1, 0);
        for _ in 0..10_000 {
            let s = ig_subordinator_increment(2.0, 1.0, &mut rng);
            assert!(s > 0.0);
            let s = ig_subordinator_increment(50.0, 1e-4, &mut rng);
            assert!(s > 0.0);
        }
    }

    #[test]
    fn zero_k_is_exact() {
        let spec = LevyProcessSpec::BrownianNR { d: 2 };
        let r = empirical_char_test(&spec, &[0.0, 0.0], &[1.0, 2.0], 200, 1).unwrap();
        for row in &r.rows {
            assert_eq!(row.mean, Complex64::new(1.0, 0.0));
            assert_eq!(row.z, 0.0);
        }
        assert!(empirical_char_test(&spec, &[0.0, 0.0], &[1.0], 99, 1).is_err());
    }
}
