//! Gradient-ascent mask optimization: the plain extremal-perturbation loop
//! and its frequency-modulated variant, plus the (r_l, r_h) ablation
//! harness.
//!
//! One run is strictly sequential; independent runs (grid cells, dataset
//! clips) are independent computations merged in deterministic key order.

use crate::data::LabeledClip;
use crate::dct::{build_band_masks, modulate_gradient, BandMaskPair, DctPlan, GfmConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    drop_in_confidence, explanation_accuracy, stc, total_variation, StcConfig,
};
use crate::model::{mask_step_with_blurred, Model, ObjectiveMode};
use crate::perturb::{gaussian_blur, AreaConfig, BlurKernel, MaskExpander, MaskParams};
use crate::scalar::{logit, Scalar};
use crate::tensor::Tensor;

/// Full configuration of one optimization run. Everything is plain data so
/// it can be echoed verbatim into output artifacts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimizerConfig {
    /// Ascent step size; zero freezes the mask (useful as a control). The
    /// desk default is sized against the probability-gradient scale of the
    /// reference models so runs converge within the default iteration
    /// budget.
    pub epsilon: f64,
    pub iterations: usize,
    /// Area regularizer weight.
    pub lambda: f64,
    /// Target mask area fraction in (0, 1).
    pub area: f64,
    /// Band ratios; absent means the plain unfiltered loop.
    pub gfm: Option<GfmConfig>,
    /// Sigma of the perturbation blur.
    pub blur_sigma: f64,
    /// Initial mask value in (0, 1); the grid starts at its logit.
    pub mask_init: f64,
    /// Coarse-grid spacing of the mask parameterization, in pixels.
    pub mask_step: usize,
    /// Upsampling kernel width of the mask parameterization, in pixels.
    pub mask_smooth_sigma: f64,
    pub objective: ObjectiveMode,
    pub seed: u64,
    /// Record per-iteration masks, grids, and applied updates.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            epsilon: 20.0,
            iterations: 300,
            lambda: 0.0,
            area: 0.1,
            gfm: None,
            blur_sigma: crate::perturb::DESK_BLUR_SIGMA,
            mask_init: 0.5,
            mask_step: crate::perturb::DESK_STEP,
            mask_smooth_sigma: crate::perturb::DESK_SMOOTH_SIGMA,
            objective: ObjectiveMode::Probability,
            seed: 0,
            record_trace: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be >= 0 and finite, got {}",
                self.epsilon
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.mask_init > 0.0 && self.mask_init < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mask_init must lie in (0, 1), got {}",
                self.mask_init
            )));
        }
        AreaConfig::new(self.area, self.lambda)?;
        BlurKernel::<f64>::new(self.blur_sigma)?;
        if let Some(gfm) = &self.gfm {
            gfm.validate()?;
        }
        Ok(())
    }
}

/// Per-iteration internals, recorded when `record_trace` is set: the mask
/// that produced each gradient, the pre-update grid, and the grid update
/// that was actually applied (before the epsilon scaling).
#[derive(Debug, Clone)]
pub struct ExplanationTrace<S: Scalar> {
    pub masks: Vec<Tensor<S>>,
    pub grids: Vec<Tensor<S>>,
    pub applied_updates: Vec<Tensor<S>>,
}

/// Outcome of one optimization run.
#[derive(Debug, Clone)]
pub struct ExplanationResult<S: Scalar> {
    /// Final expanded mask, T x 1 x H x W in [0, 1].
    pub mask: Tensor<S>,
    /// Per-iteration confidence of the target class on the perturbed clip.
    pub confidence_trace: Vec<f64>,
    /// Per-iteration confidence minus the weighted area loss.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub config: OptimizerConfig,
    pub trace: Option<ExplanationTrace<S>>,
}

/// Runs the ascent loop; plain when `cfg.gfm` is absent, band-filtered
/// when present. Aborts with a diagnostic naming the iteration if a
/// non-finite gradient ever appears.
pub fn explain<S: Scalar, M: Model<S> + ?Sized>(
    model: &M,
    clip: &Tensor<S>,
    class_index: usize,
    cfg: &OptimizerConfig,
) -> Result<ExplanationResult<S>> {
    cfg.validate()?;
    model.check_clip(clip)?;
    model.check_class(class_index)?;

    let shape = model.clip_shape();
    let full = shape.spatial();
    let kernel = BlurKernel::<S>::new(cfg.blur_sigma)?;
    let blurred = gaussian_blur(clip, &kernel)?;
    let area = AreaConfig::new(cfg.area, cfg.lambda)?;
    let mut params = MaskParams::uniform(
        full,
        cfg.mask_step,
        cfg.mask_smooth_sigma,
        logit(S::from_f64(cfg.mask_init)),
    )?;
    let expander = MaskExpander::new(full, &params)?;

    let bands: Option<(DctPlan<S>, BandMaskPair<S>)> = match &cfg.gfm {
        Some(gfm) => {
            let plan = DctPlan::new(full.0, full.1, full.2);
            Some((plan, build_band_masks(gfm, full)?))
        }
        None => None,
    };

    let eps = S::from_f64(cfg.epsilon);
    let mut confidence_trace = Vec::with_capacity(cfg.iterations);
    let mut objective_trace = Vec::with_capacity(cfg.iterations);
    let mut trace = cfg.record_trace.then(|| ExplanationTrace {
        masks: Vec::with_capacity(cfg.iterations),
        grids: Vec::with_capacity(cfg.iterations),
        applied_updates: Vec::with_capacity(cfg.iterations),
    });

    // Any non-finite value surfacing inside a step is reported as a
    // gradient abort naming the iteration.
    let non_finite = |iteration: usize| move |e: Error| match e {
        Error::NonFinite(_) => Error::NonFiniteGradient { iteration },
        other => other,
    };

    for iteration in 0..cfg.iterations {
        let mask = expander.expand(&params)?;
        let step = mask_step_with_blurred(
            model,
            clip,
            &blurred,
            &mask,
            class_index,
            &area,
            cfg.objective,
        )
        .map_err(non_finite(iteration))?;
        if !step.gradient.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteGradient { iteration });
        }
        let filtered = match &bands {
            Some((plan, masks)) => modulate_gradient(plan, &step.gradient, masks)
                .map_err(non_finite(iteration))?,
            None => step.gradient,
        };
        let grid_grad = expander.pull_back(&params, &filtered).map_err(non_finite(iteration))?;
        if let Some(tr) = trace.as_mut() {
            tr.masks.push(mask);
            tr.grids.push(params.grid.clone());
            tr.applied_updates.push(grid_grad.clone());
        }
        params.grid = params
            .grid
            .add(&grid_grad.scale(eps)?)
            .map_err(non_finite(iteration))?;
        confidence_trace.push(step.confidence.to_f64());
        objective_trace.push(step.objective.to_f64());
    }

    Ok(ExplanationResult {
        mask: expander.expand(&params)?,
        confidence_trace,
        objective_trace,
        iterations_run: cfg.iterations,
        config: cfg.clone(),
        trace,
    })
}

/// The frequency-modulated variant; `cfg.gfm` is mandatory.
pub fn explain_fep<S: Scalar, M: Model<S> + ?Sized>(
    model: &M,
    clip: &Tensor<S>,
    class_index: usize,
    cfg: &OptimizerConfig,
) -> Result<ExplanationResult<S>> {
    if cfg.gfm.is_none() {
        return Err(Error::InvalidArgument(
            "frequency-modulated run requires band ratios (gfm)".into(),
        ));
    }
    explain(model, clip, class_index, cfg)
}

/// One row of the ablation table; metric means over the dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AblationRow {
    pub r_l: f64,
    pub r_h: f64,
    pub stc: f64,
    pub dc: f64,
    pub acc: f64,
    pub tv: f64,
}

/// Ablation outcome: valid rows sorted by (r_l, r_h), plus the skipped
/// invalid pairs with the reason.
#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub skipped: Vec<((f64, f64), String)>,
}

/// Runs the explanation per clip per (r_l, r_h) pair and aggregates STC,
/// drop in confidence, accuracy, and mean mask total variation.
///
/// The (1, 0) cell is the identity band, so it runs the plain unfiltered
/// loop and reproduces its metrics exactly. Invalid pairs are skipped and
/// reported, never silently dropped. The target class of every run is the
/// model's own prediction on the clip.
pub fn ablate<S: Scalar, M: Model<S> + ?Sized>(
    model: &M,
    dataset: &[LabeledClip<S>],
    pairs: &[(f64, f64)],
    cfg: &OptimizerConfig,
    stc_cfg: &StcConfig,
) -> Result<AblationTable> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let clips: Vec<&Tensor<S>> = dataset.iter().map(|c| &c.clip).collect();
    let targets: Vec<usize> = dataset
        .iter()
        .map(|c| Ok(model.predict(&c.clip)?.label))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (r_l, r_h) in sorted {
        let gfm = match GfmConfig::new(r_l, r_h) {
            Ok(g) => g,
            Err(e) => {
                skipped.push(((r_l, r_h), e.to_string()));
                continue;
            }
        };
        let mut cell_cfg = cfg.clone();
        // Identity band: the filtered loop equals the plain one up to
        // rounding; run the plain path so the row matches it exactly.
        cell_cfg.gfm = if r_l == 1.0 && r_h == 0.0 {
            None
        } else {
            Some(gfm)
        };

        let mut masks = Vec::with_capacity(dataset.len());
        let mut tv_total = 0.0;
        let mut stc_total = 0.0;
        for (clip_index, lc) in dataset.iter().enumerate() {
            let mut run_cfg = cell_cfg.clone();
            run_cfg.seed = cfg.seed.wrapping_add(clip_index as u64);
            let result = explain(model, &lc.clip, targets[clip_index], &run_cfg)?;
            tv_total += total_variation(&result.mask)?.to_f64();
            stc_total += stc(&result.mask, &lc.boxes, stc_cfg)?;
            masks.push(result.mask);
        }
        let owned_clips: Vec<Tensor<S>> = clips.iter().map(|c| (*c).clone()).collect();
        let dc = drop_in_confidence(model, &owned_clips, &masks, &targets)?;
        let acc = explanation_accuracy(model, &owned_clips, &masks, &targets)?;
        rows.push(AblationRow {
            r_l,
            r_h,
            stc: stc_total / dataset.len() as f64,
            dc,
            acc,
            tv: tv_total / dataset.len() as f64,
        });
    }
    Ok(AblationTable { rows, skipped })
}
