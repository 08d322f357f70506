//! Network construction and forward/backward plumbing for both
//! architectures.
//!
//! DCGAN is a plain layer stack on each side. The progressive model keeps
//! per-resolution blocks plus per-resolution toRGB / fromRGB adapters and
//! routes the fade-in skip path around the newest block while `alpha < 1`.

use ndarray::{Array4, Axis};
use rand_chacha::ChaCha8Rng;

use super::{blend, GanArch, GanConfig, LatentBatch};
use crate::error::{Error, Result};
use crate::grid::{PixelGrid, RangeTag};
use crate::nn::layers::*;
use crate::nn::ops;
use crate::nn::{Param, Sequential, Tensor};
use crate::rng;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the
/// adversarial losses and their gradients.
pub const PROB_EPS: f64 = 1e-7;

/// DCGAN-paper initialization.
const DCGAN_INIT: WInit = WInit::Normal(0.02);

fn resolutions(config: &GanConfig) -> Vec<usize> {
    let mut out = Vec::new();
    let mut r = config.pggan_base;
    while r <= config.image_size {
        out.push(r);
        r *= 2;
    }
    out
}

#[derive(Clone)]
pub(crate) enum GanNet {
    Dcgan { gen: Sequential, disc: Sequential },
    Pggan { gen: PgGenerator, disc: PgDiscriminator },
}

/// A generator/discriminator pair plus its configuration.
#[derive(Clone)]
pub struct GanModel {
    config: GanConfig,
    pub(crate) net: GanNet,
}

impl GanModel {
    /// Build freshly initialized networks; weights are a deterministic
    /// function of the seed.
    pub fn new(config: GanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.arch == GanArch::Dcgan && config.image_size < 8 {
            return Err(Error::Config("dcgan requires image_size >= 8".into()));
        }
        let mut rng = rng::derive(seed, &format!("gan/init/{}", config.model_id));
        let net = match config.arch {
            GanArch::Dcgan => GanNet::Dcgan {
                gen: build_dcgan_generator(&config, &mut rng),
                disc: build_dcgan_discriminator(&config, &mut rng),
            },
            GanArch::Pggan => GanNet::Pggan {
                gen: PgGenerator::build(&config, &mut rng),
                disc: PgDiscriminator::build(&config, &mut rng),
            },
        };
        Ok(Self { config, net })
    }

    pub fn config(&self) -> &GanConfig {
        &self.config
    }

    /// Number of progressive stages (1 for dcgan).
    pub fn stage_count(&self) -> usize {
        match self.config.arch {
            GanArch::Dcgan => 1,
            GanArch::Pggan => resolutions(&self.config).len(),
        }
    }

    /// Resolution generated at a stage index.
    pub fn stage_resolution(&self, stage: usize) -> usize {
        match self.config.arch {
            GanArch::Dcgan => self.config.image_size,
            GanArch::Pggan => resolutions(&self.config)[stage],
        }
    }

    pub(crate) fn generator_forward(
        &mut self,
        input: &Tensor,
        stage: usize,
        alpha: f64,
        train: bool,
    ) -> Tensor {
        match &mut self.net {
            GanNet::Dcgan { gen, .. } => gen.forward(input, train),
            GanNet::Pggan { gen, .. } => gen.forward(input, stage, alpha, train),
        }
    }

    pub(crate) fn generator_backward(&mut self, grad: &Tensor) -> Tensor {
        match &mut self.net {
            GanNet::Dcgan { gen, .. } => gen.backward(grad),
            GanNet::Pggan { gen, .. } => gen.backward(grad),
        }
    }

    pub(crate) fn disc_forward(&mut self, x: &Tensor, stage: usize, alpha: f64, train: bool) -> Tensor {
        match &mut self.net {
            GanNet::Dcgan { disc, .. } => disc.forward(x, train),
            GanNet::Pggan { disc, .. } => disc.forward(x, stage, alpha, train),
        }
    }

    pub(crate) fn disc_backward(&mut self, grad: &Tensor) -> Tensor {
        match &mut self.net {
            GanNet::Dcgan { disc, .. } => disc.backward(grad),
            GanNet::Pggan { disc, .. } => disc.backward(grad),
        }
    }

    pub(crate) fn gen_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        match &mut self.net {
            GanNet::Dcgan { gen, .. } => prefix("gen", gen.params_mut()),
            GanNet::Pggan { gen, .. } => gen.params_mut(),
        }
    }

    pub(crate) fn disc_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        match &mut self.net {
            GanNet::Dcgan { disc, .. } => prefix("disc", disc.params_mut()),
            GanNet::Pggan { disc, .. } => disc.params_mut(),
        }
    }

    /// All parameters, generator first, with stable names for the
    /// checkpoint container.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        match &mut self.net {
            GanNet::Dcgan { gen, disc } => {
                let mut out = prefix("gen", gen.params_mut());
                out.extend(prefix("disc", disc.params_mut()));
                out
            }
            GanNet::Pggan { gen, disc } => {
                let mut out = gen.params_mut();
                out.extend(disc.params_mut());
                out
            }
        }
    }

    /// Generate `n` images at the final resolution, deterministic in the
    /// seed. Values are tanh outputs in `[-1, 1]`; labels are required
    /// exactly when the model is conditional.
    pub fn sample(&self, n: usize, labels: Option<&[usize]>, seed: u64) -> Result<Vec<PixelGrid>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut rng = rng::derive(seed, &format!("gan/sample/{}", self.config.model_id));
        let batch = LatentBatch::draw(n, self.config.latent_dim, labels.map(|l| l.to_vec()), &mut rng);
        let tensor = self.sample_tensor(&batch)?;
        tensor_to_grids(&tensor)
    }

    /// Run the generator in eval mode on a prepared latent batch,
    /// leaving `self` untouched (the forward pass runs on a clone).
    pub fn sample_tensor(&self, batch: &LatentBatch) -> Result<Tensor> {
        batch.validate(&self.config)?;
        let input = batch.to_generator_input(&self.config)?;
        let last_stage = self.stage_count() - 1;
        let mut scratch = self.clone();
        Ok(scratch.generator_forward(&input, last_stage, 1.0, false))
    }

    /// Discriminator probabilities for a batch of images at the final
    /// resolution, eval mode, read-only. Labels are required exactly
    /// when the model is conditional.
    pub fn discriminate(&self, images: &[PixelGrid], labels: Option<&[usize]>) -> Result<Vec<f64>> {
        let refs: Vec<&PixelGrid> = images.iter().collect();
        let mut x = grids_to_signed_tensor(&refs)?;
        match (labels, self.config.conditional) {
            (Some(ls), true) => {
                x = super::append_label_channels(&x, ls, self.config.label_cardinality)?;
            }
            (None, true) => {
                return Err(Error::Precondition("conditional discriminator requires labels".into()))
            }
            (Some(_), false) => {
                return Err(Error::Precondition("labels supplied to an unconditional model".into()))
            }
            (None, false) => {}
        }
        let mut scratch = self.clone();
        let stage = scratch.stage_count() - 1;
        let p = scratch.disc_forward(&x, stage, 1.0, false);
        Ok(p.iter().copied().collect())
    }
}

fn prefix<'a>(tag: &str, params: Vec<(String, &'a mut Param)>) -> Vec<(String, &'a mut Param)> {
    params.into_iter().map(|(n, p)| (format!("{tag}.{n}"), p)).collect()
}

/// `(n, c, h, w)` signed tensor to per-sample grids.
pub(crate) fn tensor_to_grids(t: &Tensor) -> Result<Vec<PixelGrid>> {
    let (n, c, h, w) = t.dim();
    (0..n)
        .map(|i| {
            let data = ndarray::Array3::from_shape_fn((h, w, c), |(y, x, ci)| {
                (t[(i, ci, y, x)] as f32).clamp(-1.0, 1.0)
            });
            PixelGrid::new(data, RangeTag::Signed)
        })
        .collect()
}

/// Unit-range grids to a signed `(n, c, h, w)` tensor (`2v - 1`).
pub(crate) fn grids_to_signed_tensor(grids: &[&PixelGrid]) -> Result<Tensor> {
    if grids.is_empty() {
        return Err(Error::Precondition("empty image batch".into()));
    }
    let (h, w, c) = (grids[0].height(), grids[0].width(), grids[0].channels());
    for g in grids {
        if (g.height(), g.width(), g.channels()) != (h, w, c) {
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w}x{c}"),
                got: format!("{}x{}x{}", g.height(), g.width(), g.channels()),
            });
        }
    }
    let mut t = Tensor::zeros((grids.len(), c, h, w));
    for (i, g) in grids.iter().enumerate() {
        let scale: f64 = match g.range() {
            RangeTag::Unit => 1.0,
            RangeTag::Signed => 0.0, // already signed
        };
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = f64::from(g.get(y, x, ci));
                    t[(i, ci, y, x)] = if scale == 1.0 { 2.0 * v - 1.0 } else { v };
                }
            }
        }
    }
    Ok(t)
}

fn build_dcgan_generator(config: &GanConfig, rng: &mut ChaCha8Rng) -> Sequential {
    let ch4 = config.channels_at(4);
    let in_dim = config.latent_dim + config.label_cardinality;
    let mut layers: Vec<Box<dyn Layer>> = vec![
        Box::new(Dense::new(in_dim, ch4 * 16, DCGAN_INIT, rng)),
        Box::new(Reshape { c: ch4, h: 4, w: 4 }),
        Box::new(BatchNorm2d::new(ch4)),
        Box::new(LeakyRelu::relu()),
    ];
    let mut r = 8;
    let mut cur = ch4;
    while r <= config.image_size {
        let last = r == config.image_size;
        let out_ch = if last { config.image_channels } else { config.channels_at(r) };
        layers.push(Box::new(ConvTranspose2d::new(cur, out_ch, 4, 2, 1, DCGAN_INIT, rng)));
        if last {
            layers.push(Box::new(Tanh::new()));
        } else {
            layers.push(Box::new(BatchNorm2d::new(out_ch)));
            layers.push(Box::new(LeakyRelu::relu()));
        }
        cur = out_ch;
        r *= 2;
    }
    Sequential::new(layers)
}

fn build_dcgan_discriminator(config: &GanConfig, rng: &mut ChaCha8Rng) -> Sequential {
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    let mut cur = config.image_channels + config.label_cardinality;
    let mut r = config.image_size;
    let mut first = true;
    while r > 4 {
        let out_ch = config.channels_at(r / 2);
        layers.push(Box::new(Conv2d::new(cur, out_ch, 4, 2, 1, DCGAN_INIT, rng)));
        if !first {
            layers.push(Box::new(BatchNorm2d::new(out_ch)));
        }
        layers.push(Box::new(LeakyRelu::new(0.2)));
        cur = out_ch;
        r /= 2;
        first = false;
    }
    layers.push(Box::new(Conv2d::new(cur, 1, 4, 1, 0, DCGAN_INIT, rng)));
    layers.push(Box::new(Sigmoid::new()));
    Sequential::new(layers)
}

// ---------------------------------------------------------------------
// Progressive generator
// ---------------------------------------------------------------------

#[derive(Clone)]
pub(crate) struct PgGenerator {
    base: Sequential,
    /// `blocks[k]` upsamples from `resolutions[k]` to `resolutions[k+1]`.
    blocks: Vec<Sequential>,
    /// `to_rgb[s]` maps stage-s features to image channels (tanh).
    to_rgb: Vec<Sequential>,
    cache: Option<(usize, f64)>,
}

impl PgGenerator {
    fn build(config: &GanConfig, rng: &mut ChaCha8Rng) -> Self {
        let res = resolutions(config);
        let base_res = res[0];
        let ch0 = config.channels_at(base_res);
        let in_dim = config.latent_dim + config.label_cardinality;

        let mut base_layers: Vec<Box<dyn Layer>> = vec![
            Box::new(Dense::new(in_dim, ch0 * base_res * base_res, DCGAN_INIT, rng)),
            Box::new(Reshape { c: ch0, h: base_res, w: base_res }),
            Box::new(LeakyRelu::new(0.2)),
        ];
        if config.pixel_norm {
            base_layers.push(Box::new(PixelNorm::new()));
        }
        base_layers.push(Box::new(Conv2d::new(ch0, ch0, 3, 1, 1, DCGAN_INIT, rng)));
        base_layers.push(Box::new(LeakyRelu::new(0.2)));
        if config.pixel_norm {
            base_layers.push(Box::new(PixelNorm::new()));
        }
        let base = Sequential::new(base_layers);

        let mut blocks = Vec::new();
        for win in res.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let (cl, chh) = (config.channels_at(lo), config.channels_at(hi));
            let mut ls: Vec<Box<dyn Layer>> = vec![
                Box::new(UpsampleNearest2x),
                Box::new(Conv2d::new(cl, chh, 3, 1, 1, DCGAN_INIT, rng)),
                Box::new(LeakyRelu::new(0.2)),
            ];
            if config.pixel_norm {
                ls.push(Box::new(PixelNorm::new()));
            }
            ls.push(Box::new(Conv2d::new(chh, chh, 3, 1, 1, DCGAN_INIT, rng)));
            ls.push(Box::new(LeakyRelu::new(0.2)));
            if config.pixel_norm {
                ls.push(Box::new(PixelNorm::new()));
            }
            blocks.push(Sequential::new(ls));
        }

        let to_rgb = res
            .iter()
            .map(|r| {
                Sequential::new(vec![
                    Box::new(Conv2d::new(config.channels_at(*r), config.image_channels, 1, 1, 0, DCGAN_INIT, rng)) as Box<dyn Layer>,
                    Box::new(Tanh::new()),
                ])
            })
            .collect();

        Self { base, blocks, to_rgb, cache: None }
    }

    fn forward(&mut self, input: &Tensor, stage: usize, alpha: f64, train: bool) -> Tensor {
        self.cache = Some((stage, alpha));
        let mut x = self.base.forward(input, train);
        for k in 0..stage.saturating_sub(1) {
            x = self.blocks[k].forward(&x, train);
        }
        if stage == 0 {
            return self.to_rgb[0].forward(&x, train);
        }
        let x_hi = self.blocks[stage - 1].forward(&x, train);
        let y_hi = self.to_rgb[stage].forward(&x_hi, train);
        if alpha >= 1.0 {
            y_hi
        } else {
            let y_lo = ops::upsample2x(&self.to_rgb[stage - 1].forward(&x, train));
            blend(&y_lo, &y_hi, alpha).expect("fade paths share a shape")
        }
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (stage, alpha) = self.cache.take().expect("backward before forward");
        if stage == 0 {
            let d = self.to_rgb[0].backward(grad);
            return self.base.backward(&d);
        }
        let mut dx = if alpha >= 1.0 {
            let d_hi = self.to_rgb[stage].backward(grad);
            self.blocks[stage - 1].backward(&d_hi)
        } else {
            let d_hi = self.to_rgb[stage].backward(&(grad * alpha));
            let d_main = self.blocks[stage - 1].backward(&d_hi);
            let d_lo_rgb = ops::upsample2x_backward(&(grad * (1.0 - alpha)));
            let d_skip = self.to_rgb[stage - 1].backward(&d_lo_rgb);
            d_main + d_skip
        };
        for k in (0..stage.saturating_sub(1)).rev() {
            dx = self.blocks[k].backward(&dx);
        }
        self.base.backward(&dx)
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = prefix("gen.base", self.base.params_mut());
        for (k, b) in self.blocks.iter_mut().enumerate() {
            out.extend(prefix(&format!("gen.block{k}"), b.params_mut()));
        }
        for (s, t) in self.to_rgb.iter_mut().enumerate() {
            out.extend(prefix(&format!("gen.torgb{s}"), t.params_mut()));
        }
        out
    }
}

// ---------------------------------------------------------------------
// Progressive discriminator
// ---------------------------------------------------------------------

#[derive(Clone)]
pub(crate) struct PgDiscriminator {
    /// `from_rgb[s]` adapts a stage-s input image to feature channels.
    from_rgb: Vec<Sequential>,
    /// `blocks[k]` downsamples from `resolutions[k+1]` to `resolutions[k]`.
    blocks: Vec<Sequential>,
    final_block: Sequential,
    cache: Option<(usize, f64)>,
}

impl PgDiscriminator {
    fn build(config: &GanConfig, rng: &mut ChaCha8Rng) -> Self {
        let res = resolutions(config);
        let in_ch = config.image_channels + config.label_cardinality;

        let from_rgb = res
            .iter()
            .map(|r| {
                Sequential::new(vec![
                    Box::new(Conv2d::new(in_ch, config.channels_at(*r), 1, 1, 0, DCGAN_INIT, rng)) as Box<dyn Layer>,
                    Box::new(LeakyRelu::new(0.2)),
                ])
            })
            .collect();

        let mut blocks = Vec::new();
        for win in res.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let (cl, chh) = (config.channels_at(lo), config.channels_at(hi));
            blocks.push(Sequential::new(vec![
                Box::new(Conv2d::new(chh, chh, 3, 1, 1, DCGAN_INIT, rng)) as Box<dyn Layer>,
                Box::new(LeakyRelu::new(0.2)),
                Box::new(Conv2d::new(chh, cl, 3, 1, 1, DCGAN_INIT, rng)),
                Box::new(LeakyRelu::new(0.2)),
                Box::new(AvgPool2x),
            ]));
        }

        let base_res = res[0];
        let ch0 = config.channels_at(base_res);
        let mut fin: Vec<Box<dyn Layer>> = Vec::new();
        let conv_in = if config.minibatch_stddev {
            fin.push(Box::new(MinibatchStdDev::new()));
            ch0 + 1
        } else {
            ch0
        };
        fin.push(Box::new(Conv2d::new(conv_in, ch0, 3, 1, 1, DCGAN_INIT, rng)));
        fin.push(Box::new(LeakyRelu::new(0.2)));
        fin.push(Box::new(Flatten::new()));
        fin.push(Box::new(Dense::new(ch0 * base_res * base_res, ch0, DCGAN_INIT, rng)));
        fin.push(Box::new(LeakyRelu::new(0.2)));
        fin.push(Box::new(Dense::new(ch0, 1, DCGAN_INIT, rng)));
        fin.push(Box::new(Sigmoid::new()));
        let final_block = Sequential::new(fin);

        Self { from_rgb, blocks, final_block, cache: None }
    }

    fn forward(&mut self, img: &Tensor, stage: usize, alpha: f64, train: bool) -> Tensor {
        self.cache = Some((stage, alpha));
        let mut x = self.from_rgb[stage].forward(img, train);
        if stage > 0 {
            x = self.blocks[stage - 1].forward(&x, train);
            if alpha < 1.0 {
                let skip = self.from_rgb[stage - 1].forward(&ops::downsample2x(img), train);
                x = blend(&skip, &x, alpha).expect("fade paths share a shape");
            }
            for k in (0..stage - 1).rev() {
                x = self.blocks[k].forward(&x, train);
            }
        }
        self.final_block.forward(&x, train)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (stage, alpha) = self.cache.take().expect("backward before forward");
        let mut dx = self.final_block.backward(grad);
        if stage == 0 {
            return self.from_rgb[0].backward(&dx);
        }
        for k in 0..stage - 1 {
            dx = self.blocks[k].backward(&dx);
        }
        if alpha < 1.0 {
            let d_main = self.blocks[stage - 1].backward(&(&dx * alpha));
            let dimg_main = self.from_rgb[stage].backward(&d_main);
            let d_skip = self.from_rgb[stage - 1].backward(&(&dx * (1.0 - alpha)));
            let dimg_skip = ops::downsample2x_backward(&d_skip);
            dimg_main + dimg_skip
        } else {
            let d = self.blocks[stage - 1].backward(&dx);
            self.from_rgb[stage].backward(&d)
        }
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (s, f) in self.from_rgb.iter_mut().enumerate() {
            out.extend(prefix(&format!("disc.fromrgb{s}"), f.params_mut()));
        }
        for (k, b) in self.blocks.iter_mut().enumerate() {
            out.extend(prefix(&format!("disc.block{k}"), b.params_mut()));
        }
        out.extend(prefix("disc.final", self.final_block.params_mut()));
        out
    }
}

/// Strip gradients flowing into appended label channels, keeping only the
/// image-channel gradient for the generator update.
pub(crate) fn image_channel_grad(grad: &Array4<f64>, image_channels: usize) -> Array4<f64> {
    grad.slice_axis(Axis(1), ndarray::Slice::from(0..image_channels)).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::GanArch;

    fn desk_pggan(stage_target: usize) -> GanModel {
        let mut cfg = GanConfig::desk("pg", GanArch::Pggan);
        cfg.image_size = stage_target;
        cfg.latent_dim = 8;
        cfg.channel_base = 64;
        cfg.channel_max = 16;
        GanModel::new(cfg, 1).unwrap()
    }

    #[test]
    fn dcgan_shapes_line_up() {
        let mut cfg = GanConfig::desk("d", GanArch::Dcgan);
        cfg.latent_dim = 8;
        cfg.channel_base = 64;
        cfg.channel_max = 16;
        let mut model = GanModel::new(cfg.clone(), 3).unwrap();
        let mut rng = crate::rng::rng_from_seed(5);
        let lat = LatentBatch::draw(2, 8, None, &mut rng);
        let input = lat.to_generator_input(&cfg).unwrap();
        let imgs = model.generator_forward(&input, 0, 1.0, true);
        assert_eq!(imgs.dim(), (2, 1, 32, 32));
        let probs = model.disc_forward(&imgs, 0, 1.0, true);
        assert_eq!(probs.dim(), (2, 1, 1, 1));
        assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn pggan_runs_every_stage_with_and_without_fade() {
        let mut model = desk_pggan(16);
        let cfg = model.config().clone();
        assert_eq!(model.stage_count(), 3);
        let mut rng = crate::rng::rng_from_seed(6);
        for stage in 0..3 {
            for alpha in [0.3, 1.0] {
                let lat = LatentBatch::draw(3, 8, None, &mut rng);
                let input = lat.to_generator_input(&cfg).unwrap();
                let imgs = model.generator_forward(&input, stage, alpha, true);
                let r = model.stage_resolution(stage);
                assert_eq!(imgs.dim(), (3, 1, r, r));
                assert!(imgs.iter().all(|v| (-1.0..=1.0).contains(v)));
                let probs = model.disc_forward(&imgs, stage, alpha, true);
                assert_eq!(probs.dim(), (3, 1, 1, 1));
                // Round-trip gradients keep shapes.
                let g = Tensor::from_elem((3, 1, 1, 1), 0.1);
                let dimg = model.disc_backward(&g);
                assert_eq!(dimg.dim(), imgs.dim());
                let dz = model.generator_backward(&dimg);
                assert_eq!(dz.dim(), input.dim());
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let model = desk_pggan(8);
        let a = model.sample(5, None, 42).unwrap();
        let b = model.sample(5, None, 42).unwrap();
        let c = model.sample(5, None, 43).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for img in &a {
            assert_eq!((img.height(), img.width()), (8, 8));
            assert!(img.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(model.sample(0, None, 1).unwrap().is_empty());
    }

    #[test]
    fn conditional_sampling_needs_valid_labels() {
        let mut cfg = GanConfig::desk("c", GanArch::Dcgan);
        cfg.conditional = true;
        cfg.label_cardinality = 2;
        cfg.latent_dim = 8;
        cfg.channel_base = 64;
        cfg.channel_max = 16;
        let model = GanModel::new(cfg, 9).unwrap();
        assert!(model.sample(2, None, 1).is_err());
        assert!(model.sample(2, Some(&[0, 2]), 1).is_err());
        let ok = model.sample(2, Some(&[0, 1]), 1).unwrap();
        assert_eq!(ok.len(), 2);
    }

    /// The fade path must be exactly linear in alpha at the output.
    #[test]
    fn generator_fade_is_linear_in_alpha() {
        let mut model = desk_pggan(8);
        let cfg = model.config().clone();
        let mut rng = crate::rng::rng_from_seed(8);
        let lat = LatentBatch::draw(2, 8, None, &mut rng);
        let input = lat.to_generator_input(&cfg).unwrap();
        let y0 = model.generator_forward(&input, 1, 0.0, false);
        let y1 = model.generator_forward(&input, 1, 1.0, false);
        let yh = model.generator_forward(&input, 1, 0.5, false);
        for ((a, b), m) in y0.iter().zip(y1.iter()).zip(yh.iter()) {
            assert!((0.5 * (a + b) - m).abs() < 1e-9);
        }
    }
}
