//! State-space discovery for time series from past/future windows, with a
//! linear readout and linear state dynamics for multi-step prediction.

use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::eigenmaps::{
    coordinates, instrumental_eigenmaps_prepared, PreparedView, TwoManifoldConfig, ViewSource,
};
use crate::error::{param, Error, Result};
use crate::graph::Scaling;
use crate::kernels::WeightVector;
use crate::metrics::rmse;
use crate::spectral_iv::{PairedDecomposition, Route};

/// Row-aligned future and past windows cut from one series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSeries {
    futures: Dataset,
    pasts: Dataset,
    indices: Vec<usize>,
    future_len: usize,
    past_len: usize,
}

impl WindowedSeries {
    pub fn futures(&self) -> &Dataset {
        &self.futures
    }

    pub fn pasts(&self) -> &Dataset {
        &self.pasts
    }

    /// Start time of each future window (0-based); its past ends one step earlier.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }

    pub fn future_len(&self) -> usize {
        self.future_len
    }

    pub fn past_len(&self) -> usize {
        self.past_len
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> WindowedSeries {
        WindowedSeries {
            futures: self.futures.select_rows(rows),
            pasts: self.pasts.select_rows(rows),
            indices: rows.iter().map(|&r| self.indices[r]).collect(),
            future_len: self.future_len,
            past_len: self.past_len,
        }
    }
}

/// Valid window starts `past_len ..= T − future_len`.
fn valid_starts(
    t_len: usize,
    future_len: usize,
    past_len: usize,
) -> Result<std::ops::RangeInclusive<usize>> {
    if future_len == 0 || past_len == 0 {
        return Err(param("window lengths must be positive"));
    }
    if t_len < future_len + past_len {
        return Err(param(format!(
            "series of length {t_len} is shorter than future ({future_len}) plus past ({past_len}) windows"
        )));
    }
    Ok(past_len..=t_len - future_len)
}

fn cut_windows(
    series: &Dataset,
    indices: Vec<usize>,
    future_len: usize,
    past_len: usize,
) -> Result<WindowedSeries> {
    let d = series.dim();
    let v = series.values();
    let futures = Mat::from_fn(indices.len(), future_len * d, |r, c| {
        v[(indices[r] + c / d, c % d)]
    });
    let pasts = Mat::from_fn(indices.len(), past_len * d, |r, c| {
        v[(indices[r] - past_len + c / d, c % d)]
    });
    let names = |len: usize, sign: &str| -> Vec<String> {
        (0..len)
            .flat_map(|lag| {
                series
                    .columns()
                    .iter()
                    .map(move |c| format!("{c}@{sign}{lag}"))
            })
            .collect()
    };
    Ok(WindowedSeries {
        futures: Dataset::with_columns(futures, names(future_len, "+"))?,
        pasts: Dataset::with_columns(pasts, names(past_len, "-"))?,
        indices,
        future_len,
        past_len,
    })
}

/// `n` window starts drawn uniformly without replacement, returned in time order.
/// Windows are flattened time-major: all channels of the first step, then the next.
pub fn sample_windows(
    series: &Dataset,
    future_len: usize,
    past_len: usize,
    n: usize,
    seed: u64,
) -> Result<WindowedSeries> {
    let starts = valid_starts(series.n(), future_len, past_len)?;
    let count = starts.end() - starts.start() + 1;
    if n == 0 || n > count {
        return Err(param(format!(
            "requested {n} windows but only {count} are valid"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, count, n)
        .into_iter()
        .map(|i| i + starts.start())
        .collect();
    idx.sort_unstable();
    cut_windows(series, idx, future_len, past_len)
}

/// Every valid window, in time order.
pub fn all_windows(series: &Dataset, future_len: usize, past_len: usize) -> Result<WindowedSeries> {
    let starts = valid_starts(series.n(), future_len, past_len)?;
    cut_windows(series, starts.collect(), future_len, past_len)
}

/// Futures-side state coordinates of a windowed series.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub decomposition: PairedDecomposition,
    /// `n×k` state coordinates of the training windows.
    pub states: Mat<f64>,
    weights: WeightVector,
    futures_view: PreparedView,
    scaling: Scaling,
}

impl StateSpace {
    pub fn k(&self) -> usize {
        self.states.ncols()
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.decomposition.spectrum
    }

    /// State coordinates of unseen future windows. Only explicit-kernel
    /// futures views extend out of sample.
    pub fn embed_futures(&self, futures: &Dataset) -> Result<Mat<f64>> {
        let kernel = self
            .futures_view
            .kernel
            .as_ref()
            .ok_or(Error::NoOutOfSample)?;
        let values = kernel.project(futures, &self.decomposition.left_projection)?;
        let ones = WeightVector::ones(values.nrows());
        debug_assert!(self.weights.is_uniform_one());
        Ok(coordinates(
            &values,
            &self.decomposition.spectrum,
            &ones,
            self.scaling,
        ))
    }
}

/// Two-view decomposition of futures against pasts; the futures side
/// supplies `Λ^{1/2}`-scaled state coordinates.
pub fn discover_state_space(
    w: &WindowedSeries,
    source_f: ViewSource,
    source_p: ViewSource,
    k: usize,
    route: Route,
) -> Result<StateSpace> {
    let cfg = TwoManifoldConfig::new(source_f, source_p, k).with_route(route);
    discover_state_space_with(w, &cfg)
}

pub fn discover_state_space_with(
    w: &WindowedSeries,
    cfg: &TwoManifoldConfig,
) -> Result<StateSpace> {
    let vf = PreparedView::from_dataset(w.futures(), cfg.view_x)
        .map_err(|e| e.context("futures view"))?;
    let vp =
        PreparedView::from_dataset(w.pasts(), cfg.view_y).map_err(|e| e.context("pasts view"))?;
    let emb = instrumental_eigenmaps_prepared(&vf, &vp, cfg)?;
    let mut decomposition = emb.decomposition;
    if decomposition.left_projection.ncols() == 0 && vf.kernel.is_some() {
        // matrix-free solves leave projections empty; U = C_Y·V/σ for the plain product
        let cv = vp.c.values() * &decomposition.right_vectors;
        let s = decomposition.spectrum.clone();
        decomposition.left_projection = Mat::from_fn(cv.nrows(), cv.ncols(), |i, j| {
            if s[j] > 0.0 {
                cv[(i, j)] / s[j]
            } else {
                0.0
            }
        });
    }
    Ok(StateSpace {
        decomposition,
        states: emb.coords_x,
        weights: vf.weights.clone(),
        futures_view: vf,
        scaling: cfg.scaling,
    })
}

/// Appends a column of ones.
fn with_intercept(m: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols() + 1, |i, j| {
        if j < m.ncols() {
            m[(i, j)]
        } else {
            1.0
        }
    })
}

/// Ridge solution of `A·W ≈ B`, intercept column included in `A` and penalized.
pub fn ridge(a: &Mat<f64>, b: &Mat<f64>, lambda: f64) -> Result<Mat<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(
            "ridge design and response rows differ".into(),
        ));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(param(format!(
            "ridge penalty must be finite and non-negative, got {lambda}"
        )));
    }
    let mut gram = a.transpose() * a;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let llt = gram.llt(Side::Lower).map_err(|_| Error::Singular)?;
    Ok(llt.solve(a.transpose() * b))
}

/// Linear readout and linear transition map on `[state, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    /// `(k+1)×d_target`.
    pub readout: Vec<Vec<f64>>,
    /// `(k+1)×k`.
    pub dynamics: Vec<Vec<f64>>,
    pub ridge_lambda: f64,
}

fn to_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn from_rows(r: &[Vec<f64>]) -> Mat<f64> {
    let cols = r.first().map_or(0, Vec::len);
    Mat::from_fn(r.len(), cols, |i, j| r[i][j])
}

impl StateSpaceModel {
    pub fn from_maps(readout: &Mat<f64>, dynamics: &Mat<f64>, ridge_lambda: f64) -> Result<Self> {
        let k = dynamics.ncols();
        if dynamics.nrows() != k + 1 || readout.nrows() != k + 1 {
            return Err(Error::DimensionMismatch(format!(
                "readout and dynamics need k+1 = {} rows for k = {k}",
                k + 1
            )));
        }
        Ok(Self {
            readout: to_rows(readout),
            dynamics: to_rows(dynamics),
            ridge_lambda,
        })
    }

    pub fn k(&self) -> usize {
        self.dynamics.first().map_or(0, Vec::len)
    }

    pub fn readout_matrix(&self) -> Mat<f64> {
        from_rows(&self.readout)
    }

    pub fn dynamics_matrix(&self) -> Mat<f64> {
        from_rows(&self.dynamics)
    }

    pub fn read(&self, states: &Mat<f64>) -> Mat<f64> {
        with_intercept(states) * self.readout_matrix()
    }

    pub fn step(&self, states: &Mat<f64>) -> Mat<f64> {
        with_intercept(states) * self.dynamics_matrix()
    }

    /// Predicted targets after `1..=horizon` transitions from each state row.
    pub fn predict(&self, states: &Mat<f64>, horizon: usize) -> Result<Vec<Mat<f64>>> {
        if horizon == 0 {
            return Err(param("horizon must be at least 1"));
        }
        if states.ncols() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "states have {} columns, model expects {}",
                states.ncols(),
                self.k()
            )));
        }
        let (dynamics, readout) = (self.dynamics_matrix(), self.readout_matrix());
        let mut cur = states.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            cur = with_intercept(&cur) * &dynamics;
            out.push(with_intercept(&cur) * &readout);
        }
        Ok(out)
    }
}

/// Fits readout and dynamics on every row of `w`.
pub fn fit_state_model(
    w: &WindowedSeries,
    states: &Mat<f64>,
    targets: &Dataset,
    ridge_lambda: f64,
) -> Result<StateSpaceModel> {
    let rows: Vec<usize> = (0..w.n()).collect();
    fit_state_model_on(w, states, targets, &rows, ridge_lambda)
}

/// Fits on a subset of rows. Transitions use row pairs whose window starts
/// differ by one step, both inside the subset.
pub fn fit_state_model_on(
    w: &WindowedSeries,
    states: &Mat<f64>,
    targets: &Dataset,
    rows: &[usize],
    ridge_lambda: f64,
) -> Result<StateSpaceModel> {
    if states.nrows() != w.n() || targets.n() != w.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} windows, {} state rows, {} target rows",
            w.n(),
            states.nrows(),
            targets.n()
        )));
    }
    let k = states.ncols();
    let sel = |m: &Mat<f64>, r: &[usize]| Mat::from_fn(r.len(), m.ncols(), |i, j| m[(r[i], j)]);
    let readout = ridge(
        &with_intercept(&sel(states, rows)),
        &sel(targets.values(), rows),
        ridge_lambda,
    )?;

    let mut by_start = std::collections::HashMap::new();
    for &r in rows {
        by_start.insert(w.indices()[r], r);
    }
    let (from, to): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .filter_map(|&r| by_start.get(&(w.indices()[r] + 1)).map(|&next| (r, next)))
        .unzip();
    if from.len() < k + 1 {
        return Err(param(format!(
            "only {} transition pairs for a {k}-dimensional state",
            from.len()
        )));
    }
    let dynamics = ridge(
        &with_intercept(&sel(states, &from)),
        &sel(states, &to),
        ridge_lambda,
    )?;
    StateSpaceModel::from_maps(&readout, &dynamics, ridge_lambda)
}

/// Per-horizon RMSE of predictions from the given state rows against
/// `truth` at `start + h`.
pub fn horizon_rmse(
    model: &StateSpaceModel,
    states: &Mat<f64>,
    starts: &[usize],
    truth: &Dataset,
    horizon: usize,
) -> Result<Vec<f64>> {
    if starts.len() != states.nrows() {
        return Err(Error::DimensionMismatch(
            "one start index per state row".into(),
        ));
    }
    if starts.iter().any(|&t| t + horizon >= truth.n()) {
        return Err(param("prediction horizon runs past the end of the series"));
    }
    model
        .predict(states, horizon)?
        .iter()
        .enumerate()
        .map(|(h, pred)| {
            let rows: Vec<usize> = starts.iter().map(|&t| t + h + 1).collect();
            rmse(pred, truth.select_rows(&rows).values())
        })
        .collect()
}

/// Windowing, split and fitting settings for a prediction experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionProtocol {
    pub future_len: usize,
    pub past_len: usize,
    pub k: usize,
    /// Steps at the start of the series available for fitting.
    pub train_len: usize,
    pub horizon: usize,
    pub ridge_lambda: f64,
}

impl Default for PredictionProtocol {
    fn default() -> Self {
        Self {
            future_len: 25,
            past_len: 25,
            k: 10,
            train_len: 2000,
            horizon: 50,
            ridge_lambda: 1e-4,
        }
    }
}

/// Transductive evaluation: the state space is discovered from all windows
/// of the series (graph views cannot embed unseen points), readout and
/// dynamics are fitted on windows lying inside the first `train_len` steps,
/// and predictions start from every later window with `horizon` steps of
/// ground truth left.
pub fn evaluate_transductive(
    observations: &Dataset,
    targets: &Dataset,
    cfg: &TwoManifoldConfig,
    protocol: &PredictionProtocol,
) -> Result<Vec<f64>> {
    if observations.n() != targets.n() {
        return Err(Error::PairedLength {
            left: observations.n(),
            right: targets.n(),
        });
    }
    let w = all_windows(observations, protocol.future_len, protocol.past_len)?;
    let cfg = TwoManifoldConfig {
        k: protocol.k,
        ..cfg.clone()
    };
    let space = discover_state_space_with(&w, &cfg)?;
    let aligned = targets.select_rows(w.indices());
    let train: Vec<usize> = (0..w.n())
        .filter(|&r| w.indices()[r] + protocol.future_len <= protocol.train_len)
        .collect();
    let test: Vec<usize> = (0..w.n())
        .filter(|&r| {
            w.indices()[r] >= protocol.train_len && w.indices()[r] + protocol.horizon < targets.n()
        })
        .collect();
    if test.is_empty() {
        return Err(param("no test windows after the training span"));
    }
    let model = fit_state_model_on(&w, &space.states, &aligned, &train, protocol.ridge_lambda)?;
    let starts: Vec<usize> = test.iter().map(|&r| w.indices()[r]).collect();
    let states = Mat::from_fn(test.len(), space.k(), |i, j| space.states[(test[i], j)]);
    horizon_rmse(&model, &states, &starts, targets, protocol.horizon)
}

/// Writes `horizon,<model>...` rows.
pub fn write_horizon_csv(path: impl AsRef<Path>, models: &[(String, Vec<f64>)]) -> Result<()> {
    let len = models.first().map_or(0, |m| m.1.len());
    if models.iter().any(|m| m.1.len() != len) {
        return Err(param("all models need the same number of horizons"));
    }
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = vec!["horizon".to_string()];
    header.extend(models.iter().map(|m| m.0.clone()));
    wtr.write_record(&header)?;
    for h in 0..len {
        let mut row = vec![(h + 1).to_string()];
        row.extend(models.iter().map(|m| crate::data::format_f64(m.1[h])));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::metrics::principal_angles;
    use crate::spectral_iv::two_subspace_pca;

    fn counting(t_len: usize) -> Dataset {
        Dataset::from_fn(t_len, 1, |i, _| i as f64)
    }

    /// Noiseless slowly damped rotation observed through three channels.
    fn rotation_series(t_len: usize) -> Dataset {
        let theta = 2.0 * std::f64::consts::PI / 17.3;
        let c = [[1.0, 0.3], [-0.5, 0.8], [0.2, -1.1]];
        Dataset::from_fn(t_len, 3, |t, ch| {
            let a = theta * t as f64;
            (-0.004 * t as f64).exp() * (c[ch][0] * a.cos() + c[ch][1] * a.sin())
        })
    }

    const LINEAR: ViewSource = ViewSource::Kernel {
        kernel: KernelSpec::Linear,
    };

    #[test]
    fn forced_single_window() {
        let w = sample_windows(&counting(5), 3, 2, 1, 0).unwrap();
        assert_eq!(w.indices(), &[2]);
        assert!(sample_windows(&counting(5), 3, 2, 2, 0).is_err());
        assert!(sample_windows(&counting(4), 3, 2, 1, 0).is_err());
    }

    #[test]
    fn windows_follow_the_series() {
        let w = sample_windows(&counting(40), 4, 3, 10, 9).unwrap();
        for (r, &t) in w.indices().iter().enumerate() {
            assert_eq!(
                w.futures().row(r),
                (t..t + 4).map(|v| v as f64).collect::<Vec<_>>()
            );
            assert_eq!(
                w.pasts().row(r),
                (t - 3..t).map(|v| v as f64).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn exhaustive_sample_enumerates_every_window() {
        let s = counting(30);
        let sampled = sample_windows(&s, 5, 4, 22, 3).unwrap();
        assert_eq!(sampled, all_windows(&s, 5, 4).unwrap());
        assert_eq!(sampled.indices(), (4..=25).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn multichannel_windows_are_time_major() {
        let s = Dataset::from_fn(10, 2, |t, c| (10 * t + c) as f64);
        let w = all_windows(&s, 2, 1).unwrap();
        assert_eq!(w.futures().row(0), vec![10.0, 11.0, 20.0, 21.0]);
        assert_eq!(w.pasts().row(0), vec![0.0, 1.0]);
    }

    #[test]
    fn linear_states_match_window_subspace_identification() {
        let w = all_windows(&rotation_series(120), 5, 5).unwrap();
        let space = discover_state_space(&w, LINEAR, LINEAR, 2, Route::Svd).unwrap();
        let pca = two_subspace_pca(w.futures(), w.pasts(), 2).unwrap();
        let oracle = w.futures().centered().values() * &pca.left_vectors;
        for a in principal_angles(&space.states, &oracle).unwrap() {
            assert!(a <= 1e-6, "{a}");
        }
    }

    #[test]
    fn rbf_and_graph_sources_produce_state_spaces() {
        let w = all_windows(&rotation_series(200), 4, 4).unwrap();
        let rbf = discover_state_space(
            &w,
            ViewSource::RbfMedian,
            ViewSource::RbfMedian,
            3,
            Route::Svd,
        )
        .unwrap();
        assert_eq!(rbf.states.ncols(), 3);
        assert!(rbf.spectrum().windows(2).all(|p| p[0] >= p[1]));
        let g = ViewSource::Graph {
            k_nn: 10,
            weight: crate::graph::WeightMode::Binary,
        };
        let graph = discover_state_space(&w, g, g, 3, Route::Svd).unwrap();
        assert_eq!(graph.states.nrows(), w.n());
        assert!(matches!(
            graph.embed_futures(w.futures()),
            Err(Error::NoOutOfSample)
        ));
    }

    #[test]
    fn kernel_states_extend_out_of_sample() {
        let w = all_windows(&rotation_series(150), 4, 4).unwrap();
        let space = discover_state_space(
            &w,
            ViewSource::RbfMedian,
            ViewSource::RbfMedian,
            3,
            Route::Svd,
        )
        .unwrap();
        let again = space.embed_futures(w.futures()).unwrap();
        assert!((&again - &space.states).norm_l2() <= 1e-8 * space.states.norm_l2());
    }

    #[test]
    fn states_invariant_to_window_order() {
        let w = all_windows(&rotation_series(100), 4, 4).unwrap();
        let perm: Vec<usize> = (0..w.n()).rev().collect();
        let a = discover_state_space(
            &w,
            ViewSource::RbfMedian,
            ViewSource::RbfMedian,
            2,
            Route::Svd,
        )
        .unwrap();
        let b = discover_state_space(
            &w.select(&perm),
            ViewSource::RbfMedian,
            ViewSource::RbfMedian,
            2,
            Route::Svd,
        )
        .unwrap();
        for j in 0..2 {
            let dot: f64 = (0..w.n())
                .map(|i| a.states[(perm[i], j)] * b.states[(i, j)])
                .sum();
            let sign = dot.signum();
            for i in 0..w.n() {
                assert!((a.states[(perm[i], j)] - sign * b.states[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn realizable_readout_is_recovered() {
        let w = all_windows(&rotation_series(80), 3, 3).unwrap();
        let states = Mat::from_fn(w.n(), 2, |i, j| ((i * (j + 2)) as f64 * 0.37).sin());
        let targets = Dataset::new(Mat::from_fn(w.n(), 1, |i, _| {
            2.0 * states[(i, 0)] - 0.5 * states[(i, 1)] + 3.0
        }));
        let model = fit_state_model(&w, &states, &targets, 1e-10).unwrap();
        assert!((model.read(&states) - targets.values()).norm_max() <= 1e-6);
    }

    #[test]
    fn huge_penalty_gives_zero_readout() {
        let w = all_windows(&rotation_series(80), 3, 3).unwrap();
        let states = Mat::from_fn(w.n(), 2, |i, j| (i + j) as f64 * 0.01);
        let targets = Dataset::new(Mat::from_fn(w.n(), 1, |i, _| i as f64));
        let model = fit_state_model(&w, &states, &targets, 1e14).unwrap();
        assert!(model.readout_matrix().norm_max() < 1e-6);
    }

    #[test]
    fn one_step_prediction_is_readout_of_dynamics() {
        let w = all_windows(&rotation_series(80), 3, 3).unwrap();
        let space = discover_state_space(&w, LINEAR, LINEAR, 2, Route::Svd).unwrap();
        let targets = Dataset::new(w.futures().select_columns(&[0]).into_values());
        let model = fit_state_model(&w, &space.states, &targets, 1e-4).unwrap();
        let p = model.predict(&space.states, 1).unwrap();
        assert_eq!(p[0], model.read(&model.step(&space.states)));
    }

    #[test]
    fn identity_dynamics_hold_predictions_constant() {
        let mut dynamics = Mat::zeros(3, 2);
        dynamics[(0, 0)] = 1.0;
        dynamics[(1, 1)] = 1.0;
        let readout = Mat::from_fn(3, 1, |i, _| i as f64 + 1.0);
        let model = StateSpaceModel::from_maps(&readout, &dynamics, 0.0).unwrap();
        let states = Mat::from_fn(4, 2, |i, j| (i + 2 * j) as f64);
        let preds = model.predict(&states, 5).unwrap();
        for p in &preds[1..] {
            assert_eq!(p, &preds[0]);
        }
    }

    #[test]
    fn noiseless_rotation_predictions_stay_bounded() {
        let series = rotation_series(300);
        let w = all_windows(&series, 5, 5).unwrap();
        let space = discover_state_space(&w, LINEAR, LINEAR, 2, Route::Svd).unwrap();
        let aligned = series.select_rows(w.indices());
        let model = fit_state_model(&w, &space.states, &aligned, 1e-4).unwrap();
        let rows: Vec<usize> = (0..100).collect();
        let starts: Vec<usize> = rows.iter().map(|&r| w.indices()[r]).collect();
        let states = Mat::from_fn(rows.len(), 2, |i, j| space.states[(rows[i], j)]);
        let err = horizon_rmse(&model, &states, &starts, &series, 10).unwrap();
        for (h, e) in err.iter().enumerate() {
            assert!(
                *e <= (h + 1) as f64 * err[0] + 1e-6,
                "horizon {}: {e}",
                h + 1
            );
        }
        assert!(err[9] < 1e-2, "{err:?}");
    }

    #[test]
    fn too_few_transitions_rejected() {
        let w = sample_windows(&counting(100), 3, 3, 4, 1).unwrap();
        let states = Mat::from_fn(4, 3, |i, j| (i * j) as f64);
        let targets = Dataset::new(Mat::zeros(4, 1));
        assert!(fit_state_model(&w, &states, &targets, 1e-4).is_err());
    }

    #[test]
    fn horizon_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_horizon_csv(
            &path,
            &[("a".into(), vec![1.0, 2.0]), ("b".into(), vec![0.5, 0.25])],
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "horizon,a,b\n1,1.0,0.5\n2,2.0,0.25\n"
        );
    }
}
