//! End-to-end estimation for the four method variants, scoring, and
//! seeded parameter sweeps.

use std::fmt;

use crate::denoise::{self, CadzowConfig, CadzowResult};
use crate::error::{Error, Result, StageExt};
use crate::prony::{self, CoefficientFrame, FrameEstimate, InversionOperator};
use crate::refine::{self, IFTrack, RefineConfig, RefinedTrack};
use crate::signalgen::{self, SampledSignal, SignalSpec};
use crate::tfr::{self, SpectrogramGrid, WindowParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Cad,
    CadTlsa,
    CadSpline,
    CadTlsaSpline,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cad, Method::CadTlsa, Method::CadSpline, Method::CadTlsaSpline];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cad => "cad",
            Method::CadTlsa => "cad-tlsa",
            Method::CadSpline => "cad-spline",
            Method::CadTlsaSpline => "cad-tlsa-spline",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown method {name:?}; expected cad, cad-tlsa, cad-spline or cad-tlsa-spline")))
    }

    pub fn uses_tlsa(self) -> bool {
        matches!(self, Method::CadTlsa | Method::CadTlsaSpline)
    }

    pub fn uses_spline(self) -> bool {
        matches!(self, Method::CadSpline | Method::CadTlsaSpline)
    }

    /// The variant sharing this one's tracks without refinement.
    pub fn base(self) -> Method {
        if self.uses_tlsa() {
            Method::CadTlsa
        } else {
            Method::Cad
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub method: Method,
    pub sigma: f64,
    pub bins: usize,
    /// `None`: from the Gaussian weight floor.
    pub m0: Option<usize>,
    /// `None`: `T = M₀`.
    pub order_t: Option<usize>,
    pub cadzow_stop: f64,
    pub cadzow_max_iters: usize,
    pub refine: RefineConfig,
    /// `None`: `⌈3σF_s⌉`.
    pub boundary_margin: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: Method::CadSpline,
            sigma: 0.02,
            bins: tfr::DEFAULT_BINS,
            m0: None,
            order_t: None,
            cadzow_stop: denoise::DEFAULT_SV_RATIO_STOP,
            cadzow_max_iters: denoise::DEFAULT_MAX_ITERS,
            refine: RefineConfig::default(),
            boundary_margin: None,
        }
    }
}

impl PipelineConfig {
    pub fn with_method(&self, method: Method) -> Self {
        Self { method, ..self.clone() }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..self.clone() }
    }

    pub fn window(&self) -> WindowParams {
        WindowParams::new(self.sigma)
    }

    pub fn resolved_m0(&self, sample_rate: f64) -> usize {
        self.m0
            .unwrap_or_else(|| prony::default_m0(self.window(), sample_rate, self.bins, prony::DEFAULT_WEIGHT_FLOOR))
    }

    pub fn resolved_t(&self, sample_rate: f64) -> usize {
        self.order_t.unwrap_or_else(|| self.resolved_m0(sample_rate))
    }

    pub fn margin(&self, sample_rate: f64) -> usize {
        self.boundary_margin
            .unwrap_or_else(|| (3.0 * self.sigma * sample_rate - 1e-9).ceil().max(0.0) as usize)
    }

    pub fn cadzow(&self, sample_rate: f64) -> CadzowConfig {
        CadzowConfig {
            order_t: self.resolved_t(sample_rate),
            sv_ratio_stop: self.cadzow_stop,
            max_iters: self.cadzow_max_iters,
        }
    }

    /// Joint bounds for `P` modes over `frames` frames at `sample_rate`.
    pub fn validate(&self, order: usize, frames: usize, sample_rate: f64) -> Result<()> {
        if order == 0 {
            return Err(Error::Config("model order P must be at least 1".into()));
        }
        self.window().validate()?;
        if self.bins < 3 {
            return Err(Error::Config(format!("bin count K = {} is too small", self.bins)));
        }
        let m0 = self.resolved_m0(sample_rate);
        if m0 < order {
            return Err(Error::Config(format!("M₀ = {m0} is below the model order P = {order}")));
        }
        self.cadzow(sample_rate).validate(order, m0)?;
        self.refine.validate()?;
        let margin = self.margin(sample_rate);
        let interior = frames.saturating_sub(2 * margin);
        if interior < self.refine.cells.max(4) {
            return Err(Error::Config(format!(
                "boundary margin {margin} leaves {interior} of {frames} frames, fewer than Q = {}",
                self.refine.cells
            )));
        }
        Ok(())
    }
}

/// Per-frame Cadzow and filter diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Leading `P+1` singular values of the last Toeplitz matrix examined.
    pub final_singular_values: Vec<f64>,
}

/// Everything computed before the filter choice: spectrogram, coefficient
/// frames before and after Cadzow.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub spectrogram: SpectrogramGrid,
    pub operator: InversionOperator,
    pub raw: Vec<CoefficientFrame>,
    pub denoised: Vec<CoefficientFrame>,
    pub diagnostics: Vec<FrameDiagnostics>,
}

fn spectrogram_frames(signal: &SampledSignal, cfg: &PipelineConfig) -> Result<(SpectrogramGrid, InversionOperator, Vec<CoefficientFrame>)> {
    let fs = signal.sample_rate;
    let st = tfr::stft(signal, cfg.window(), cfg.bins).stage("stft")?;
    let grid = tfr::spectrogram(&st);
    let op = prony::build_inversion(cfg.window(), fs, cfg.bins, cfg.resolved_m0(fs)).stage("inversion")?;
    let raw = (0..grid.frames)
        .map(|n| prony::invert_slice(&op, grid.row(n), n))
        .collect::<Result<Vec<_>>>()
        .stage("inversion")?;
    Ok((grid, op, raw))
}

pub fn front_end(signal: &SampledSignal, order: usize, cfg: &PipelineConfig) -> Result<FrontEnd> {
    cfg.validate(order, signal.len(), signal.sample_rate)?;
    let (spectrogram, operator, raw) = spectrogram_frames(signal, cfg)?;
    let cz = cfg.cadzow(signal.sample_rate);
    let mut denoised = Vec::with_capacity(raw.len());
    let mut diagnostics = Vec::with_capacity(raw.len());
    for (n, frame) in raw.iter().enumerate() {
        let CadzowResult {
            frame: clean,
            iterations,
            converged,
            sv_history,
        } = denoise::cadzow(frame, order, &cz).stage("cadzow")?;
        denoised.push(clean);
        diagnostics.push(FrameDiagnostics {
            frame: n,
            iterations,
            converged,
            final_singular_values: sv_history.last().map(|s| s[..(order + 1).min(s.len())].to_vec()).unwrap_or_default(),
        });
    }
    Ok(FrontEnd {
        spectrogram,
        operator,
        raw,
        denoised,
        diagnostics,
    })
}

/// Annihilating filter per denoised frame (Yule-Walker or TLSA), then roots
/// and amplitudes.
pub fn frame_estimates(front: &FrontEnd, order: usize, tlsa: bool, order_t: usize) -> Result<Vec<FrameEstimate>> {
    let fs = front.operator.sample_rate;
    front
        .denoised
        .iter()
        .zip(&front.diagnostics)
        .map(|(frame, diag)| {
            let filter = if tlsa {
                denoise::tlsa_filter(frame, order, order_t).stage("tlsa")?
            } else {
                prony::yule_walker(frame, order).stage("yule-walker")?
            };
            let mut est = prony::frame_estimate(frame, &filter, fs);
            est.flags.denoise_converged = diag.converged;
            Ok(est)
        })
        .collect()
}

/// Per-frame Yule-Walker on the undenoised coefficient frames.
pub fn raw_prony_tracks(signal: &SampledSignal, order: usize, cfg: &PipelineConfig) -> Result<Vec<IFTrack>> {
    cfg.validate(order, signal.len(), signal.sample_rate)?;
    let (_, _, raw) = spectrogram_frames(signal, cfg)?;
    let est = raw
        .iter()
        .map(|f| Ok(prony::frame_estimate(f, &prony::yule_walker(f, order)?, signal.sample_rate)))
        .collect::<Result<Vec<_>>>()
        .stage("yule-walker")?;
    Ok(prony::track_modes(&est, order))
}

/// One mode of a pipeline run.
#[derive(Debug, Clone)]
pub struct ModeOutput {
    pub track: IFTrack,
    pub refined: Option<RefinedTrack>,
    /// Final estimate on every frame: `ψ` for spline variants, the track
    /// otherwise. `NaN` where unavailable.
    pub estimate: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub method: Method,
    pub margin: usize,
    pub frame_estimates: Vec<FrameEstimate>,
    pub modes: Vec<ModeOutput>,
}

impl Estimate {
    pub fn failed(&self) -> bool {
        self.modes.iter().any(|m| m.failure.is_some())
    }
}

/// Turns tracks into mode outputs for `method`, refining if it is a spline
/// variant. Per-mode refinement failures are recorded, not raised.
pub fn finish(tracks: Vec<IFTrack>, frame_estimates: Vec<FrameEstimate>, method: Method, cfg: &PipelineConfig, sample_rate: f64) -> Estimate {
    let frames = frame_estimates.len();
    let margin = cfg.margin(sample_rate);
    let modes = tracks
        .into_iter()
        .map(|track| {
            if !method.uses_spline() {
                let estimate = track.values.clone();
                return ModeOutput {
                    track,
                    refined: None,
                    estimate,
                    failure: None,
                };
            }
            match refine::refine_track(&track, &cfg.refine, margin, frames - margin) {
                Ok(r) => ModeOutput {
                    estimate: r.psi.clone(),
                    track,
                    refined: Some(r),
                    failure: None,
                },
                Err(e) => ModeOutput {
                    estimate: vec![f64::NAN; frames],
                    track,
                    refined: None,
                    failure: Some(e.at("refine").to_string()),
                },
            }
        })
        .collect();
    Estimate {
        method,
        margin,
        frame_estimates,
        modes,
    }
}

/// STFT → spectrogram → inversion → Cadzow → filter → roots → tracking,
/// then spline refinement for the spline variants.
pub fn run_algorithm1(signal: &SampledSignal, order: usize, cfg: &PipelineConfig) -> Result<(FrontEnd, Estimate)> {
    let front = front_end(signal, order, cfg)?;
    let est = frame_estimates(&front, order, cfg.method.uses_tlsa(), cfg.resolved_t(signal.sample_rate))?;
    let tracks = prony::track_modes(&est, order);
    let out = finish(tracks, est, cfg.method, cfg, signal.sample_rate);
    Ok((front, out))
}

/// `(1/N') √Σ (x_n − truth_n)²` over frames `[margin, len − margin)`.
pub fn normalized_l2_error(x: &[f64], truth: &[f64], margin: usize) -> Result<f64> {
    if x.len() != truth.len() {
        return Err(Error::InvalidSignal(format!(
            "estimate has {} frames, truth has {}",
            x.len(),
            truth.len()
        )));
    }
    let end = x.len().saturating_sub(margin);
    if end <= margin {
        return Err(Error::InvalidSignal(format!(
            "margin {margin} leaves no frames out of {}",
            x.len()
        )));
    }
    let kept = (end - margin) as f64;
    let ss: f64 = (margin..end).map(|n| (x[n] - truth[n]).powi(2)).sum();
    Ok(ss.sqrt() / kept)
}

/// Truth IFs reordered ascending by their value at the first scored frame,
/// matching the labelling used by tracking.
pub fn ordered_truth(spec: &SignalSpec, margin: usize) -> Vec<Vec<f64>> {
    let mut truth = spec.true_ifs();
    let at = margin.min(spec.sample_count.saturating_sub(1));
    truth.sort_by(|a, b| a[at].total_cmp(&b[at]));
    truth
}

/// Seed of realisation `r` of a sweep seeded with `seed`.
pub fn realization_seed(seed: u64, r: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (r as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    pub sigmas: Vec<f64>,
    pub snr_db: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Template; `method` and `sigma` are overridden per cell.
    pub base: PipelineConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("a sweep needs at least one realization".into()));
        }
        if self.methods.is_empty() || self.sigmas.is_empty() {
            return Err(Error::Config("a sweep needs at least one method and one sigma".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("SNR is NaN".into()));
        }
        Ok(())
    }
}

/// One (method, σ, realization, mode) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub method: Method,
    pub sigma: f64,
    pub snr_db: f64,
    pub realization: usize,
    pub mode: usize,
    pub boundary_margin: usize,
    /// `NaN` when the cell failed.
    pub error: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanRow {
    pub method: Method,
    pub sigma: f64,
    pub snr_db: f64,
    pub mode: usize,
    pub boundary_margin: usize,
    pub mean: f64,
    pub succeeded: usize,
    pub realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub records: Vec<ErrorRecord>,
}

impl ErrorReport {
    /// Realisation means per (method, σ, mode), in method/σ/mode order of
    /// first appearance. Failed cells are excluded from the mean.
    pub fn means(&self) -> Vec<MeanRow> {
        let mut rows: Vec<MeanRow> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for rec in &self.records {
            let idx = rows
                .iter()
                .position(|r| r.method == rec.method && r.sigma == rec.sigma && r.mode == rec.mode && r.snr_db == rec.snr_db);
            let i = match idx {
                Some(i) => i,
                None => {
                    rows.push(MeanRow {
                        method: rec.method,
                        sigma: rec.sigma,
                        snr_db: rec.snr_db,
                        mode: rec.mode,
                        boundary_margin: rec.boundary_margin,
                        mean: f64::NAN,
                        succeeded: 0,
                        realizations: 0,
                    });
                    sums.push(0.0);
                    rows.len() - 1
                }
            };
            rows[i].realizations += 1;
            if rec.failure.is_none() && rec.error.is_finite() {
                rows[i].succeeded += 1;
                sums[i] += rec.error;
            }
        }
        for (row, s) in rows.iter_mut().zip(sums) {
            if row.succeeded > 0 {
                row.mean = s / row.succeeded as f64;
            }
        }
        rows.sort_by(|a, b| {
            a.method
                .cmp(&b.method)
                .then(a.sigma.total_cmp(&b.sigma))
                .then(a.mode.cmp(&b.mode))
        });
        rows
    }

    pub fn mean(&self, method: Method, sigma: f64, mode: usize) -> Option<f64> {
        self.means()
            .into_iter()
            .find(|r| r.method == method && r.sigma == sigma && r.mode == mode)
            .map(|r| r.mean)
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failure.is_some()).count()
    }
}

fn score(est: &Estimate, truth: &[Vec<f64>]) -> Vec<(f64, Option<String>)> {
    est.modes
        .iter()
        .enumerate()
        .map(|(p, m)| {
            if let Some(f) = &m.failure {
                return (f64::NAN, Some(f.clone()));
            }
            match normalized_l2_error(&m.estimate, &truth[p], est.margin) {
                Ok(e) if e.is_finite() => (e, None),
                Ok(_) => (f64::NAN, Some("estimate is not finite on scored frames".into())),
                Err(e) => (f64::NAN, Some(e.to_string())),
            }
        })
        .collect()
}

/// Full method × σ factorial with `R` noise draws per σ. Draw `r` is the
/// same signal for every method and σ. Failed cells are recorded and the
/// sweep continues.
pub fn sweep(spec: &SignalSpec, sweep: &SweepSpec) -> Result<ErrorReport> {
    sweep.validate()?;
    let clean = signalgen::synthesize(spec)?;
    let order = spec.mode_count();
    let fs = clean.sample_rate;
    let mut records = Vec::new();
    let needs_yw = sweep.methods.iter().any(|m| !m.uses_tlsa());
    let needs_tlsa = sweep.methods.iter().any(|m| m.uses_tlsa());
    for &sigma in &sweep.sigmas {
        let cfg = sweep.base.with_sigma(sigma);
        cfg.validate(order, clean.len(), fs)?;
    }
    for r in 0..sweep.realizations {
        let noisy = signalgen::add_noise(&clean, sweep.snr_db, realization_seed(sweep.seed, r))?;
        for &sigma in &sweep.sigmas {
            let cfg = sweep.base.with_sigma(sigma);
            let margin = cfg.margin(fs);
            let truth = ordered_truth(spec, margin);
            let mut push = |method: Method, scored: Vec<(f64, Option<String>)>| {
                for (mode, (error, failure)) in scored.into_iter().enumerate() {
                    records.push(ErrorRecord {
                        method,
                        sigma,
                        snr_db: sweep.snr_db,
                        realization: r,
                        mode,
                        boundary_margin: margin,
                        error,
                        failure,
                    });
                }
            };
            let front = match front_end(&noisy, order, &cfg) {
                Ok(f) => f,
                Err(e) => {
                    for &m in &sweep.methods {
                        push(m, vec![(f64::NAN, Some(e.to_string())); order]);
                    }
                    continue;
                }
            };
            for (tlsa, wanted) in [(false, needs_yw), (true, needs_tlsa)] {
                if !wanted {
                    continue;
                }
                let est = match frame_estimates(&front, order, tlsa, cfg.resolved_t(fs)) {
                    Ok(e) => e,
                    Err(e) => {
                        for &m in sweep.methods.iter().filter(|m| m.uses_tlsa() == tlsa) {
                            push(m, vec![(f64::NAN, Some(e.to_string())); order]);
                        }
                        continue;
                    }
                };
                let tracks = prony::track_modes(&est, order);
                for &m in sweep.methods.iter().filter(|m| m.uses_tlsa() == tlsa) {
                    let out = finish(tracks.clone(), est.clone(), m, &cfg, fs);
                    push(m, score(&out, &truth));
                }
            }
        }
    }
    Ok(ErrorReport { records })
}
