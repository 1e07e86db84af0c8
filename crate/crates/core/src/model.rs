//! Differentiable classifier abstraction and two desk-scale reference
//! implementations.
//!
//! `TemplateModel` is a linear matched-filter classifier with closed-form
//! gradients, used wherever tests need exact values. `TinyConvModel` is a
//! small 3-D conv -> ReLU -> global-average-pool -> linear head network
//! with a hand-written reverse pass, used to exercise nonlinearity. Both
//! expose the input gradient of a chosen class score so the mask optimizer
//! can chain through the perturbation operator.

use rand::Rng;

use crate::error::{Error, Result};
use crate::perturb::{area_loss, area_loss_grad, gaussian_blur, perturb_with_blurred, AreaConfig, BlurKernel};
use crate::scalar::Scalar;
use crate::tensor::{ClipShape, Tensor};

/// Class probabilities plus the argmax label (ties go to the lowest index).
#[derive(Debug, Clone)]
pub struct Prediction<S: Scalar> {
    pub probs: Vec<S>,
    pub label: usize,
}

impl<S: Scalar> Prediction<S> {
    fn from_probs(probs: Vec<S>) -> Self {
        let mut label = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[label] {
                label = i;
            }
        }
        Prediction { probs, label }
    }
}

/// Whether the optimizer maximizes the softmax probability of the target
/// class or its raw logit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    #[default]
    Probability,
    Logit,
}

/// Deterministic differentiable classifier over fixed-shape clips.
pub trait Model<S: Scalar> {
    fn num_classes(&self) -> usize;

    fn clip_shape(&self) -> ClipShape;

    /// Pre-softmax class scores.
    fn logits(&self, clip: &Tensor<S>) -> Result<Vec<S>>;

    /// Gradient of `logits[class_index]` with respect to every input
    /// element, as a tensor of clip shape.
    fn logit_input_gradient(&self, clip: &Tensor<S>, class_index: usize) -> Result<Tensor<S>>;

    fn predict(&self, clip: &Tensor<S>) -> Result<Prediction<S>> {
        Ok(Prediction::from_probs(softmax(&self.logits(clip)?)))
    }

    /// Gradient of `probs[class_index]` with respect to every input
    /// element, with the softmax Jacobian folded in.
    fn input_gradient(&self, clip: &Tensor<S>, class_index: usize) -> Result<Tensor<S>> {
        let probs = softmax(&self.logits(clip)?);
        self.check_class(class_index)?;
        // d p_c / d x = sum_y p_c (delta_cy - p_y) * d logit_y / d x
        let mut grad = Tensor::zeros(&self.clip_shape().dims());
        for y in 0..self.num_classes() {
            let delta = if y == class_index { S::one() } else { S::zero() };
            let coeff = probs[class_index] * (delta - probs[y]);
            if coeff == S::zero() {
                continue;
            }
            let gy = self.logit_input_gradient(clip, y)?;
            grad = grad.add(&gy.scale(coeff)?)?;
        }
        Ok(grad)
    }

    fn check_class(&self, class_index: usize) -> Result<()> {
        if class_index >= self.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "class index {} out of range ({} classes)",
                class_index,
                self.num_classes()
            )));
        }
        Ok(())
    }

    fn check_clip(&self, clip: &Tensor<S>) -> Result<()> {
        let expect = self.clip_shape().dims();
        if clip.shape() != expect {
            return Err(Error::shape_mismatch("model input", &expect, clip.shape()));
        }
        Ok(())
    }
}

fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .fold(S::neg_infinity(), |acc, &v| acc.max(v));
    let exps: Vec<S> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total = exps.iter().fold(S::zero(), |acc, &v| acc + v);
    exps.into_iter().map(|v| v / total).collect()
}

/// Linear matched-filter classifier:
/// `probs = softmax((<W_y, clip> + b_y) / temperature)`.
///
/// The bias sits inside the temperature scaling so that rescaling the
/// temperature rescales every logit uniformly and never moves the argmax.
#[derive(Debug, Clone)]
pub struct TemplateModel<S: Scalar> {
    templates: Vec<Tensor<S>>,
    bias: Vec<S>,
    temperature: S,
    shape: ClipShape,
}

impl<S: Scalar> TemplateModel<S> {
    pub fn new(templates: Vec<Tensor<S>>, bias: Vec<S>, temperature: S) -> Result<Self> {
        if templates.is_empty() || templates.len() != bias.len() {
            return Err(Error::InvalidArgument(format!(
                "need matching template/bias counts >= 1, got {}/{}",
                templates.len(),
                bias.len()
            )));
        }
        if temperature <= S::zero() || !temperature.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "temperature must be > 0, got {}",
                temperature
            )));
        }
        let dims = templates[0].shape().to_vec();
        if dims.len() != 4 {
            return Err(Error::InvalidArgument(
                "templates must have clip shape T x C x H x W".into(),
            ));
        }
        for t in &templates {
            if t.shape() != dims {
                return Err(Error::shape_mismatch("template", &dims, t.shape()));
            }
        }
        let shape = ClipShape::new(dims[0], dims[1], dims[2], dims[3])?;
        Ok(TemplateModel {
            templates,
            bias,
            temperature,
            shape,
        })
    }

    pub fn templates(&self) -> &[Tensor<S>] {
        &self.templates
    }

    pub fn bias(&self) -> &[S] {
        &self.bias
    }

    pub fn temperature(&self) -> S {
        self.temperature
    }
}

impl<S: Scalar> Model<S> for TemplateModel<S> {
    fn num_classes(&self) -> usize {
        self.templates.len()
    }

    fn clip_shape(&self) -> ClipShape {
        self.shape
    }

    fn logits(&self, clip: &Tensor<S>) -> Result<Vec<S>> {
        self.check_clip(clip)?;
        self.templates
            .iter()
            .zip(&self.bias)
            .map(|(t, &b)| Ok((t.dot(clip)? + b) / self.temperature))
            .collect()
    }

    fn logit_input_gradient(&self, clip: &Tensor<S>, class_index: usize) -> Result<Tensor<S>> {
        self.check_clip(clip)?;
        self.check_class(class_index)?;
        self.templates[class_index].scale(S::one() / self.temperature)
    }
}

/// Small nonlinear reference model: valid-padding 3-D convolution, ReLU,
/// global average pooling per channel, linear head, softmax.
#[derive(Debug, Clone)]
pub struct TinyConvModel<S: Scalar> {
    /// Kernel, shape [C_out, C, k_t, k_h, k_w].
    kernel: Tensor<S>,
    conv_bias: Vec<S>,
    /// Head weights, row-major Y x C_out.
    head_w: Vec<S>,
    head_b: Vec<S>,
    shape: ClipShape,
    num_classes: usize,
}

struct ConvForward<S> {
    /// Pre-activations, [C_out, T', H', W'] flattened.
    pre: Vec<S>,
    pool: Vec<S>,
    logits: Vec<S>,
}

impl<S: Scalar> TinyConvModel<S> {
    pub fn new(
        kernel: Tensor<S>,
        conv_bias: Vec<S>,
        head_w: Vec<S>,
        head_b: Vec<S>,
        shape: ClipShape,
    ) -> Result<Self> {
        let k = kernel.shape();
        if k.len() != 5 {
            return Err(Error::InvalidArgument(
                "conv kernel must be rank 5 (C_out x C x k_t x k_h x k_w)".into(),
            ));
        }
        let (c_out, c_in) = (k[0], k[1]);
        if c_in != shape.c {
            return Err(Error::InvalidArgument(format!(
                "kernel expects {} input channels, clip shape has {}",
                c_in, shape.c
            )));
        }
        if k[2] > shape.t || k[3] > shape.h || k[4] > shape.w {
            return Err(Error::InvalidArgument(
                "conv kernel larger than the clip".into(),
            ));
        }
        if conv_bias.len() != c_out {
            return Err(Error::InvalidArgument("conv bias length mismatch".into()));
        }
        if head_w.len() % c_out != 0 || head_w.is_empty() {
            return Err(Error::InvalidArgument("head weight shape mismatch".into()));
        }
        let num_classes = head_w.len() / c_out;
        if head_b.len() != num_classes {
            return Err(Error::InvalidArgument("head bias length mismatch".into()));
        }
        let finite = |vs: &[S]| vs.iter().all(|v| v.is_finite());
        if !finite(&conv_bias) || !finite(&head_w) || !finite(&head_b) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(TinyConvModel {
            kernel,
            conv_bias,
            head_w,
            head_b,
            shape,
            num_classes,
        })
    }

    /// Random small-weight initialization from a bare seed.
    pub fn seeded_init(
        shape: ClipShape,
        c_out: usize,
        k_dims: (usize, usize, usize),
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self::random_init(shape, c_out, k_dims, num_classes, &mut rng)
    }

    /// Random small-weight initialization with a caller-supplied generator.
    pub fn random_init(
        shape: ClipShape,
        c_out: usize,
        k_dims: (usize, usize, usize),
        num_classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (kt, kh, kw) = k_dims;
        let kshape = vec![c_out, shape.c, kt, kh, kw];
        let kvol: usize = kshape.iter().product();
        let kernel = Tensor::new(
            kshape,
            (0..kvol)
                .map(|_| S::from_f64(rng.gen_range(-0.1..0.1)))
                .collect(),
        )?;
        let conv_bias = (0..c_out)
            .map(|_| S::from_f64(rng.gen_range(-0.1..0.1)))
            .collect();
        let head_w = (0..num_classes * c_out)
            .map(|_| S::from_f64(rng.gen_range(-0.1..0.1)))
            .collect();
        let head_b = (0..num_classes)
            .map(|_| S::from_f64(rng.gen_range(-0.1..0.1)))
            .collect();
        TinyConvModel::new(kernel, conv_bias, head_w, head_b, shape)
    }

    pub fn kernel(&self) -> &Tensor<S> {
        &self.kernel
    }

    /// Smallest |pre-activation| over the conv output; gradient checks
    /// resample inputs that sit on a ReLU kink.
    pub fn min_abs_preactivation(&self, clip: &Tensor<S>) -> Result<S> {
        let fwd = self.forward(clip)?;
        Ok(fwd
            .pre
            .iter()
            .fold(S::infinity(), |acc, &v| acc.min(v.abs())))
    }

    pub fn conv_bias(&self) -> &[S] {
        &self.conv_bias
    }

    pub fn head_weights(&self) -> &[S] {
        &self.head_w
    }

    pub fn head_bias(&self) -> &[S] {
        &self.head_b
    }

    fn out_dims(&self) -> (usize, usize, usize, usize) {
        let k = self.kernel.shape();
        (
            k[0],
            self.shape.t - k[2] + 1,
            self.shape.h - k[3] + 1,
            self.shape.w - k[4] + 1,
        )
    }

    fn forward(&self, clip: &Tensor<S>) -> Result<ConvForward<S>> {
        self.check_clip(clip)?;
        let k = self.kernel.shape();
        let (c_out, to, ho, wo) = self.out_dims();
        let (ci, kt, kh, kw) = (k[1], k[2], k[3], k[4]);
        let (h, w) = (self.shape.h, self.shape.w);
        let x = clip.data();
        let kd = self.kernel.data();
        let mut pre = vec![S::zero(); c_out * to * ho * wo];
        for o in 0..c_out {
            for t0 in 0..to {
                for h0 in 0..ho {
                    for w0 in 0..wo {
                        let mut acc = self.conv_bias[o];
                        for c in 0..ci {
                            for dt in 0..kt {
                                for dh in 0..kh {
                                    for dw in 0..kw {
                                        let xi = (((t0 + dt) * ci + c) * h + (h0 + dh)) * w
                                            + (w0 + dw);
                                        let ki = (((o * ci + c) * kt + dt) * kh + dh) * kw + dw;
                                        acc += kd[ki] * x[xi];
                                    }
                                }
                            }
                        }
                        pre[((o * to + t0) * ho + h0) * wo + w0] = acc;
                    }
                }
            }
        }
        let positions = to * ho * wo;
        let inv = S::one() / S::from_f64(positions as f64);
        let pool: Vec<S> = (0..c_out)
            .map(|o| {
                pre[o * positions..(o + 1) * positions]
                    .iter()
                    .fold(S::zero(), |acc, &v| acc + v.max(S::zero()))
                    * inv
            })
            .collect();
        let logits = (0..self.num_classes)
            .map(|y| {
                let mut acc = self.head_b[y];
                for o in 0..c_out {
                    acc += self.head_w[y * c_out + o] * pool[o];
                }
                acc
            })
            .collect();
        Ok(ConvForward { pre, pool, logits })
    }

    /// Reverse pass from per-pool-channel coefficients down to the input.
    /// ReLU uses subgradient 0 at exactly 0.
    fn input_grad_from_pool(&self, fwd: &ConvForward<S>, pool_coeff: &[S]) -> Tensor<S> {
        let k = self.kernel.shape();
        let (c_out, to, ho, wo) = self.out_dims();
        let (ci, kt, kh, kw) = (k[1], k[2], k[3], k[4]);
        let (h, w) = (self.shape.h, self.shape.w);
        let kd = self.kernel.data();
        let positions = to * ho * wo;
        let inv = S::one() / S::from_f64(positions as f64);
        let mut dx = vec![S::zero(); self.shape.volume()];
        for o in 0..c_out {
            let coeff = pool_coeff[o] * inv;
            if coeff == S::zero() {
                continue;
            }
            for t0 in 0..to {
                for h0 in 0..ho {
                    for w0 in 0..wo {
                        let pi = ((o * to + t0) * ho + h0) * wo + w0;
                        if !(fwd.pre[pi] > S::zero()) {
                            continue;
                        }
                        for c in 0..ci {
                            for dt in 0..kt {
                                for dh in 0..kh {
                                    for dw in 0..kw {
                                        let xi = (((t0 + dt) * ci + c) * h + (h0 + dh)) * w
                                            + (w0 + dw);
                                        let ki = (((o * ci + c) * kt + dt) * kh + dh) * kw + dw;
                                        dx[xi] += coeff * kd[ki];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(self.shape.dims().to_vec(), dx).expect("finite gradient")
    }

    /// One cross-entropy SGD step on a single example; returns the loss.
    fn sgd_step(&mut self, clip: &Tensor<S>, label: usize, lr: S) -> Result<S> {
        let fwd = self.forward(clip)?;
        let probs = softmax(&fwd.logits);
        let loss = -(probs[label].max(S::from_f64(1e-300))).ln();

        let k = self.kernel.shape().to_vec();
        let (c_out, to, ho, wo) = self.out_dims();
        let (ci, kt, kh, kw) = (k[1], k[2], k[3], k[4]);
        let (h, w) = (self.shape.h, self.shape.w);
        let positions = to * ho * wo;
        let inv = S::one() / S::from_f64(positions as f64);

        // d loss / d logit_y = p_y - onehot
        let dlogit: Vec<S> = probs
            .iter()
            .enumerate()
            .map(|(y, &p)| if y == label { p - S::one() } else { p })
            .collect();

        // Head gradients.
        let mut dhead_w = vec![S::zero(); self.head_w.len()];
        let mut dpool = vec![S::zero(); c_out];
        for y in 0..self.num_classes {
            for o in 0..c_out {
                dhead_w[y * c_out + o] = dlogit[y] * fwd.pool[o];
                dpool[o] += dlogit[y] * self.head_w[y * c_out + o];
            }
        }

        // Conv gradients through pool + ReLU.
        let x = clip.data();
        let mut dkernel = vec![S::zero(); self.kernel.len()];
        let mut dconv_bias = vec![S::zero(); c_out];
        for o in 0..c_out {
            let coeff = dpool[o] * inv;
            if coeff == S::zero() {
                continue;
            }
            for t0 in 0..to {
                for h0 in 0..ho {
                    for w0 in 0..wo {
                        let pi = ((o * to + t0) * ho + h0) * wo + w0;
                        if !(fwd.pre[pi] > S::zero()) {
                            continue;
                        }
                        dconv_bias[o] += coeff;
                        for c in 0..ci {
                            for dt in 0..kt {
                                for dh in 0..kh {
                                    for dw in 0..kw {
                                        let xi = (((t0 + dt) * ci + c) * h + (h0 + dh)) * w
                                            + (w0 + dw);
                                        let ki = (((o * ci + c) * kt + dt) * kh + dh) * kw + dw;
                                        dkernel[ki] += coeff * x[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        let mut kd = self.kernel.data().to_vec();
        for (kv, g) in kd.iter_mut().zip(&dkernel) {
            *kv -= lr * *g;
        }
        self.kernel = Tensor::new(k, kd)?;
        for (b, g) in self.conv_bias.iter_mut().zip(&dconv_bias) {
            *b -= lr * *g;
        }
        for (wv, g) in self.head_w.iter_mut().zip(&dhead_w) {
            *wv -= lr * *g;
        }
        for (b, &g) in self.head_b.iter_mut().zip(&dlogit) {
            *b -= lr * g;
        }
        Ok(loss)
    }

    /// Plain per-example SGD over the whole set for `epochs` passes, in a
    /// fixed order. Returns the mean loss of the final epoch.
    pub fn train_sgd(
        &mut self,
        examples: &[(&Tensor<S>, usize)],
        epochs: usize,
        lr: S,
    ) -> Result<S> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut last = S::zero();
        for _ in 0..epochs {
            let mut total = S::zero();
            for &(clip, label) in examples {
                self.check_class(label)?;
                total += self.sgd_step(clip, label, lr)?;
            }
            last = total / S::from_f64(examples.len() as f64);
        }
        Ok(last)
    }
}

impl<S: Scalar> Model<S> for TinyConvModel<S> {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn clip_shape(&self) -> ClipShape {
        self.shape
    }

    fn logits(&self, clip: &Tensor<S>) -> Result<Vec<S>> {
        Ok(self.forward(clip)?.logits)
    }

    fn logit_input_gradient(&self, clip: &Tensor<S>, class_index: usize) -> Result<Tensor<S>> {
        self.check_class(class_index)?;
        let fwd = self.forward(clip)?;
        let c_out = self.out_dims().0;
        let coeff: Vec<S> = (0..c_out)
            .map(|o| self.head_w[class_index * c_out + o])
            .collect();
        Ok(self.input_grad_from_pool(&fwd, &coeff))
    }

    fn input_gradient(&self, clip: &Tensor<S>, class_index: usize) -> Result<Tensor<S>> {
        self.check_class(class_index)?;
        let fwd = self.forward(clip)?;
        let probs = softmax(&fwd.logits);
        let c_out = self.out_dims().0;
        // Fold the softmax Jacobian into one pool-coefficient vector so a
        // single reverse pass suffices.
        let coeff: Vec<S> = (0..c_out)
            .map(|o| {
                let mut acc = S::zero();
                for y in 0..self.num_classes {
                    let delta = if y == class_index { S::one() } else { S::zero() };
                    acc += probs[class_index] * (delta - probs[y]) * self.head_w[y * c_out + o];
                }
                acc
            })
            .collect();
        Ok(self.input_grad_from_pool(&fwd, &coeff))
    }
}

/// Either reference model behind one dispatching type (what model files
/// deserialize into).
#[derive(Debug, Clone)]
pub enum AnyModel<S: Scalar> {
    Template(TemplateModel<S>),
    TinyConv(TinyConvModel<S>),
}

impl<S: Scalar> Model<S> for AnyModel<S> {
    fn num_classes(&self) -> usize {
        match self {
            AnyModel::Template(m) => m.num_classes(),
            AnyModel::TinyConv(m) => m.num_classes(),
        }
    }

    fn clip_shape(&self) -> ClipShape {
        match self {
            AnyModel::Template(m) => m.clip_shape(),
            AnyModel::TinyConv(m) => m.clip_shape(),
        }
    }

    fn logits(&self, clip: &Tensor<S>) -> Result<Vec<S>> {
        match self {
            AnyModel::Template(m) => m.logits(clip),
            AnyModel::TinyConv(m) => m.logits(clip),
        }
    }

    fn logit_input_gradient(&self, clip: &Tensor<S>, class_index: usize) -> Result<Tensor<S>> {
        match self {
            AnyModel::Template(m) => m.logit_input_gradient(clip, class_index),
            AnyModel::TinyConv(m) => m.logit_input_gradient(clip, class_index),
        }
    }

    fn input_gradient(&self, clip: &Tensor<S>, class_index: usize) -> Result<Tensor<S>> {
        match self {
            AnyModel::Template(m) => m.input_gradient(clip, class_index),
            AnyModel::TinyConv(m) => m.input_gradient(clip, class_index),
        }
    }
}

/// One evaluation of the masked objective: confidence, the full objective
/// value (confidence minus the weighted area loss), and the gradient of
/// the objective with respect to the full-resolution mask.
#[derive(Debug, Clone)]
pub struct MaskStep<S: Scalar> {
    pub confidence: S,
    pub objective: S,
    pub gradient: Tensor<S>,
}

/// Masked-objective gradient with the blurred clip precomputed.
pub fn mask_step_with_blurred<S: Scalar, M: Model<S> + ?Sized>(
    model: &M,
    clip: &Tensor<S>,
    blurred: &Tensor<S>,
    mask: &Tensor<S>,
    class_index: usize,
    area: &AreaConfig,
    mode: ObjectiveMode,
) -> Result<MaskStep<S>> {
    let perturbed = perturb_with_blurred(clip, blurred, mask)?;
    let confidence = match mode {
        ObjectiveMode::Probability => model.predict(&perturbed)?.probs[class_index],
        ObjectiveMode::Logit => model.logits(&perturbed)?[class_index],
    };
    let input_grad = match mode {
        ObjectiveMode::Probability => model.input_gradient(&perturbed, class_index)?,
        ObjectiveMode::Logit => model.logit_input_gradient(&perturbed, class_index)?,
    };
    // d perturbed / d mask = clip - blur(clip), broadcast over channels.
    let diff = clip.sub(blurred)?;
    let chain = input_grad.mul(&diff)?.reduce_channels()?;
    let lambda = S::from_f64(area.lambda);
    let loss = area_loss(mask, area);
    let (t, h, w) = (mask.shape()[0], mask.shape()[2], mask.shape()[3]);
    let area_grad = area_loss_grad(mask, area)?.reshape(&[t, h, w])?;
    let gradient = chain.sub(&area_grad.scale(lambda)?)?;
    Ok(MaskStep {
        confidence,
        objective: confidence - lambda * loss,
        gradient,
    })
}

/// Gradient of `objective(class) = score(perturb(clip, mask)) -
/// lambda * area_loss(mask)` with respect to the T x 1 x H x W mask,
/// collapsed to T x H x W.
pub fn mask_gradient<S: Scalar, M: Model<S> + ?Sized>(
    model: &M,
    clip: &Tensor<S>,
    mask: &Tensor<S>,
    kernel: &BlurKernel<S>,
    class_index: usize,
    area: &AreaConfig,
    mode: ObjectiveMode,
) -> Result<Tensor<S>> {
    let blurred = gaussian_blur(clip, kernel)?;
    Ok(mask_step_with_blurred(model, clip, &blurred, mask, class_index, area, mode)?.gradient)
}

/// Central finite differences of an arbitrary scalar objective, entry by
/// entry: `(f(x + d e_i) - f(x - d e_i)) / (2 d)`.
pub fn finite_difference_oracle<S: Scalar>(
    objective: impl Fn(&Tensor<S>) -> S,
    point: &Tensor<S>,
    step: f64,
) -> Tensor<S> {
    let delta = S::from_f64(step);
    let two = S::from_f64(2.0);
    let mut grad = vec![S::zero(); point.len()];
    let mut data = point.data().to_vec();
    for i in 0..data.len() {
        let orig = data[i];
        data[i] = orig + delta;
        let plus = objective(&Tensor::new(point.shape().to_vec(), data.clone()).unwrap());
        data[i] = orig - delta;
        let minus = objective(&Tensor::new(point.shape().to_vec(), data.clone()).unwrap());
        data[i] = orig;
        grad[i] = (plus - minus) / (two * delta);
    }
    Tensor::new(point.shape().to_vec(), grad).expect("finite difference gradient")
}
