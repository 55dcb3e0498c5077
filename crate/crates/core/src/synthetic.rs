//! Ground-truth-bearing data generators: the linear latent model, paired
//! noisy swiss rolls and noisy figure-eight trajectories.

use std::f64::consts::PI;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{param, Error, Result};
use crate::linalg::{sym_eig, trunc_svd};

/// Independent random streams derived from one seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn named(values: Mat<f64>, prefix: &str) -> Dataset {
    let cols = (1..=values.ncols())
        .map(|j| format!("{prefix}{j}"))
        .collect();
    Dataset::with_columns(values, cols).expect("column count matches")
}

/// `x = M·z + ε`, `y = N·z + ζ` with Gaussian `z`, `ε`, `ζ`.
#[derive(Debug, Clone)]
pub struct LinearLatentModel {
    m_map: Mat<f64>,
    n_map: Mat<f64>,
    latent_cov: Mat<f64>,
    noise_cov_x: Mat<f64>,
    noise_cov_y: Mat<f64>,
    seed: u64,
}

impl LinearLatentModel {
    pub fn new(
        m_map: Mat<f64>,
        n_map: Mat<f64>,
        latent_cov: Mat<f64>,
        noise_cov_x: Mat<f64>,
        noise_cov_y: Mat<f64>,
        seed: u64,
    ) -> Result<Self> {
        let k = latent_cov.nrows();
        if m_map.ncols() != k || n_map.ncols() != k || latent_cov.ncols() != k {
            return Err(Error::DimensionMismatch(
                "maps and latent covariance disagree on k".into(),
            ));
        }
        if noise_cov_x.nrows() != m_map.nrows() || noise_cov_y.nrows() != n_map.nrows() {
            return Err(Error::DimensionMismatch("noise covariance sizes".into()));
        }
        for (name, map) in [("M", &m_map), ("N", &n_map)] {
            if map.nrows() < k {
                return Err(param(format!("{name} must have full column rank")));
            }
            let s = trunc_svd(map, k)?;
            if s.singular_values[k - 1] <= 1e-8 {
                return Err(param(format!(
                    "{name} is rank deficient (σ_min = {:.2e})",
                    s.singular_values[k - 1]
                )));
            }
        }
        let lat = sym_eig(&latent_cov)?;
        if lat.eigenvalues[k - 1] <= 1e-12 * lat.eigenvalues[0].max(1.0) {
            return Err(param("latent covariance must be full rank"));
        }
        for (name, c) in [("x", &noise_cov_x), ("y", &noise_cov_y)] {
            let e = sym_eig(c)?;
            if e.eigenvalues.last().copied().unwrap_or(0.0) < -1e-10 {
                return Err(param(format!(
                    "noise covariance of {name} is not positive semidefinite"
                )));
            }
        }
        Ok(Self {
            m_map,
            n_map,
            latent_cov,
            noise_cov_x,
            noise_cov_y,
            seed,
        })
    }

    /// Standard-normal maps, identity latent covariance, isotropic noise.
    pub fn random(spec: &LinearModelSpec) -> Result<Self> {
        let mut rng = stream(spec.seed, 7);
        let (d1, d2, k) = (spec.dim_x, spec.dim_y, spec.latent_dim);
        let m = Mat::from_fn(d1, k, |_, _| rng.sample(StandardNormal));
        let n = Mat::from_fn(d2, k, |_, _| rng.sample(StandardNormal));
        let iso = |d: usize, s: f64| Mat::from_fn(d, d, |i, j| if i == j { s * s } else { 0.0 });
        Self::new(
            m,
            n,
            Mat::identity(k, k),
            iso(d1, spec.noise_x),
            iso(d2, spec.noise_y),
            spec.seed,
        )
    }

    pub fn m_map(&self) -> &Mat<f64> {
        &self.m_map
    }

    pub fn n_map(&self) -> &Mat<f64> {
        &self.n_map
    }

    pub fn latent_cov(&self) -> &Mat<f64> {
        &self.latent_cov
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// JSON-friendly description of a random linear latent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelSpec {
    pub dim_x: usize,
    pub dim_y: usize,
    pub latent_dim: usize,
    /// Noise standard deviation per coordinate.
    pub noise_x: f64,
    pub noise_y: f64,
    pub seed: u64,
}

impl Default for LinearModelSpec {
    fn default() -> Self {
        Self {
            dim_x: 10,
            dim_y: 10,
            latent_dim: 2,
            noise_x: 1.0,
            noise_y: 1.0,
            seed: 0,
        }
    }
}

/// Square root factor `L` with `L·Lᵀ = C` for a PSD matrix.
fn psd_factor(c: &Mat<f64>) -> Result<Mat<f64>> {
    let e = sym_eig(c)?;
    let v = &e.eigenvectors;
    Ok(Mat::from_fn(v.nrows(), v.ncols(), |i, j| {
        v[(i, j)] * e.eigenvalues[j].max(0.0).sqrt()
    }))
}

fn gaussian_rows(n: usize, factor: &Mat<f64>, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let g = Mat::from_fn(n, factor.ncols(), |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    &g * factor.transpose()
}

/// Samples `n` triples `(x_i, y_i, z_i)`. Latent draws, `x`-noise and
/// `y`-noise use independent streams of the model seed.
pub fn gen_linear(model: &LinearLatentModel, n: usize) -> Result<(Dataset, Dataset, Dataset)> {
    if n == 0 {
        return Err(param("n must be at least 1"));
    }
    let z = gaussian_rows(
        n,
        &psd_factor(&model.latent_cov)?,
        &mut stream(model.seed, 1),
    );
    let eps = gaussian_rows(
        n,
        &psd_factor(&model.noise_cov_x)?,
        &mut stream(model.seed, 2),
    );
    let zeta = gaussian_rows(
        n,
        &psd_factor(&model.noise_cov_y)?,
        &mut stream(model.seed, 3),
    );
    let x = &z * model.m_map.transpose() + &eps;
    let y = &z * model.n_map.transpose() + &zeta;
    Ok((named(x, "x"), named(y, "y"), named(z, "z")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwissRollSpec {
    pub n: usize,
    /// Range of the roll angle `z₁ = t`.
    pub t_range: [f64; 2],
    /// Range of the height `z₂`.
    pub height_range: [f64; 2],
    /// Per-axis noise standard deviations of each view.
    pub noise_x: [f64; 3],
    pub noise_y: [f64; 3],
    pub seed: u64,
}

impl Default for SwissRollSpec {
    fn default() -> Self {
        Self {
            n: 5000,
            t_range: [1.5 * PI, 3.0 * PI],
            height_range: [0.0, 20.0],
            noise_x: [1.0; 3],
            noise_y: [1.0; 3],
            seed: 0,
        }
    }
}

impl SwissRollSpec {
    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_x = [sigma; 3];
        self.noise_y = [sigma; 3];
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(param("swiss roll needs n >= 1"));
        }
        for (name, r) in [
            ("t_range", self.t_range),
            ("height_range", self.height_range),
        ] {
            if !(r[1] > r[0]) || !r.iter().all(|v| v.is_finite()) {
                return Err(param(format!(
                    "{name} must be an increasing finite interval"
                )));
            }
        }
        if self
            .noise_x
            .iter()
            .chain(&self.noise_y)
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(param("noise scales must be finite and non-negative"));
        }
        Ok(())
    }

    /// Noiseless first view `f(z) = (t·cos t, z₂, t·sin t)`.
    pub fn first_map(&self, t: f64, h: f64) -> [f64; 3] {
        [t * t.cos(), h, t * t.sin()]
    }

    /// Noiseless second view: the roll runs the other way
    /// (`t' = t_min + t_max − t`) and the axes are permuted.
    pub fn second_map(&self, t: f64, h: f64) -> [f64; 3] {
        let tr = self.t_range[0] + self.t_range[1] - t;
        [h, tr * tr.sin(), tr * tr.cos()]
    }
}

/// Samples a pair of noisy swiss rolls sharing the latent `z = (t, z₂)`.
pub fn gen_swiss_roll_pair(spec: &SwissRollSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let n = spec.n;
    let mut lat = stream(spec.seed, 1);
    let z: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                lat.random_range(spec.t_range[0]..=spec.t_range[1]),
                lat.random_range(spec.height_range[0]..=spec.height_range[1]),
            ]
        })
        .collect();
    let noisy = |map: &dyn Fn(f64, f64) -> [f64; 3], sigma: [f64; 3], id: u64| {
        let mut rng = stream(spec.seed, id);
        let mut m = Mat::zeros(n, 3);
        for (i, zi) in z.iter().enumerate() {
            let clean = map(zi[0], zi[1]);
            for a in 0..3 {
                let e: f64 = rng.sample(StandardNormal);
                m[(i, a)] = clean[a] + sigma[a] * e;
            }
        }
        m
    };
    let x = noisy(&|t, h| spec.first_map(t, h), spec.noise_x, 2);
    let y = noisy(&|t, h| spec.second_map(t, h), spec.noise_y, 3);
    let zm = Mat::from_fn(n, 2, |i, j| z[i][j]);
    Ok((named(x, "x"), named(y, "y"), named(zm, "z")))
}

/// A figure-eight track `p(s) = scale·(sin s, sin 2s / 2)` driven by a phase
/// ODE `ds/dt = ω(1 + c·cos 2s)·m(t)`, where `m` is a slow random speed
/// modulation, observed through six IMU-like channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopTrajectorySpec {
    /// Number of time steps.
    pub t_len: usize,
    /// Nominal time steps per lap.
    pub lap_period: f64,
    pub scale: f64,
    /// Speed contrast between straights and turns.
    pub speed_contrast: f64,
    /// Relative amplitude of the slow speed modulation.
    pub modulation: f64,
    /// Standard deviation of noise added to the standardized channels.
    pub noise: f64,
    /// RK4 substeps per time step.
    pub substeps: usize,
    pub seed: u64,
}

impl Default for LoopTrajectorySpec {
    fn default() -> Self {
        Self {
            t_len: 2500,
            lap_period: 80.0,
            scale: 10.0,
            speed_contrast: 0.35,
            modulation: 0.03,
            noise: 0.5,
            substeps: 4,
            seed: 0,
        }
    }
}

/// Channel names of [`gen_loop_trajectory`] observations.
pub const LOOP_CHANNELS: [&str; 6] = [
    "accel_tangential",
    "accel_lateral",
    "yaw_rate",
    "speed",
    "heading_cos",
    "heading_sin",
];

#[derive(Debug, Clone)]
pub struct LoopTrajectory {
    /// `T×6` standardized channels plus noise.
    pub observations: Dataset,
    /// `T×2` positions on the track.
    pub positions: Dataset,
    /// Unwrapped track phase `s(t)`.
    pub phase: Vec<f64>,
}

impl LoopTrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_len < 2 {
            return Err(param("trajectory needs at least 2 steps"));
        }
        if !(self.lap_period > 0.0 && self.scale > 0.0 && self.substeps > 0) {
            return Err(param("lap period, scale and substeps must be positive"));
        }
        if !(0.0..1.0).contains(&self.speed_contrast) || !(0.0..0.5).contains(&self.modulation) {
            return Err(param(
                "speed contrast must lie in [0, 1) and modulation in [0, 0.5)",
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(param("noise must be finite and non-negative"));
        }
        Ok(())
    }

    fn omega(&self) -> f64 {
        2.0 * PI / self.lap_period
    }

    /// Upper bound on `|ds/dt|`.
    pub fn max_phase_rate(&self) -> f64 {
        self.omega() * (1.0 + self.speed_contrast) * (1.0 + 1.5 * self.modulation)
    }

    /// Upper bound on `|d²s/dt²|` given the modulation periods are at least 120 steps.
    pub fn max_phase_accel(&self) -> f64 {
        let w = self.omega();
        let min_mod_freq = 2.0 * PI / 120.0;
        2.0 * self.speed_contrast * self.max_phase_rate() * w * (1.0 + 1.5 * self.modulation)
            + w * (1.0 + self.speed_contrast) * 1.5 * self.modulation * min_mod_freq
    }

    /// Upper bound on `|p''(t)|`, hence on second differences of positions.
    pub fn position_accel_bound(&self) -> f64 {
        let r = self.max_phase_rate();
        self.scale * (5.0f64.sqrt() * r * r + 2.0f64.sqrt() * self.max_phase_accel())
    }
}

/// Integrates the phase ODE and derives positions and observation channels.
pub fn gen_loop_trajectory(spec: &LoopTrajectorySpec) -> Result<LoopTrajectory> {
    spec.validate()?;
    let mut rng = stream(spec.seed, 1);
    let w = spec.omega();
    let c = spec.speed_contrast;
    let amp = spec.modulation;
    let w1 = 2.0 * PI / rng.random_range(300.0..600.0);
    let p1 = rng.random_range(0.0..2.0 * PI);
    let w2 = 2.0 * PI / rng.random_range(120.0..200.0);
    let p2 = rng.random_range(0.0..2.0 * PI);
    let modulation = |t: f64| 1.0 + amp * (w1 * t + p1).sin() + 0.5 * amp * (w2 * t + p2).sin();
    let modulation_rate =
        |t: f64| amp * w1 * (w1 * t + p1).cos() + 0.5 * amp * w2 * (w2 * t + p2).cos();
    let rate = |t: f64, s: f64| w * (1.0 + c * (2.0 * s).cos()) * modulation(t);

    let t_len = spec.t_len;
    let h = 1.0 / spec.substeps as f64;
    let mut phase = Vec::with_capacity(t_len);
    let mut s = rng.random_range(0.0..2.0 * PI);
    for i in 0..t_len {
        phase.push(s);
        let mut t = i as f64;
        for _ in 0..spec.substeps {
            let k1 = rate(t, s);
            let k2 = rate(t + h / 2.0, s + h / 2.0 * k1);
            let k3 = rate(t + h / 2.0, s + h / 2.0 * k2);
            let k4 = rate(t + h, s + h * k3);
            s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
    }

    let sc = spec.scale;
    let mut positions = Mat::zeros(t_len, 2);
    let mut channels = Mat::zeros(t_len, 6);
    for (i, &s) in phase.iter().enumerate() {
        let t = i as f64;
        let sd = rate(t, s);
        let sdd = w
            * (-2.0 * c * (2.0 * s).sin() * sd * modulation(t)
                + (1.0 + c * (2.0 * s).cos()) * modulation_rate(t));
        positions[(i, 0)] = sc * s.sin();
        positions[(i, 1)] = sc * (2.0 * s).sin() / 2.0;
        let v = [sc * s.cos() * sd, sc * (2.0 * s).cos() * sd];
        let a = [
            sc * (-s.sin() * sd * sd + s.cos() * sdd),
            sc * (-2.0 * (2.0 * s).sin() * sd * sd + (2.0 * s).cos() * sdd),
        ];
        let speed = v[0].hypot(v[1]);
        let lateral = (v[0] * a[1] - v[1] * a[0]) / speed;
        channels[(i, 0)] = (v[0] * a[0] + v[1] * a[1]) / speed;
        channels[(i, 1)] = lateral;
        channels[(i, 2)] = lateral / speed;
        channels[(i, 3)] = speed;
        channels[(i, 4)] = v[0] / speed;
        channels[(i, 5)] = v[1] / speed;
    }
    let clean = Dataset::new(channels).standardized();
    let mut noise_rng = stream(spec.seed, 2);
    let obs = Mat::from_fn(t_len, 6, |i, j| {
        clean.get(i, j) + spec.noise * noise_rng.sample::<f64, _>(StandardNormal)
    });
    let observations =
        Dataset::with_columns(obs, LOOP_CHANNELS.iter().map(|s| s.to_string()).collect())?;
    let positions = Dataset::with_columns(positions, vec!["px".into(), "py".into()])?;
    Ok(LoopTrajectory {
        observations,
        positions,
        phase,
    })
}
