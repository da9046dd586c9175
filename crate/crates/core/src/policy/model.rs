//! Network definition, forward passes and reverse-diffusion sampling.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::{Block, Linear, Mat, Norm, Params, Tape, Var};
use crate::raster::Raster;
use crate::seed::{rng_for, STREAM_INIT};
use crate::world::{Action, ActionChunk, Proprioception};

use super::diffusion::{time_embedding, Schedule};
use super::tokenizer::{TextBag, SLOT_KINDS};
use super::{PolicyConfig, PolicyError};

/// Policy input for one observation, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// Row-major patches, `patches × patch_dim` bytes.
    pub patches: Vec<u8>,
    pub text: Option<TextBag>,
    pub proprio: [f64; Proprioception::DIM],
}

/// Splits an image into flattened `p × p × 3` patches in raster order.
pub fn patchify(img: &Raster, cfg: &PolicyConfig) -> Result<Vec<u8>, PolicyError> {
    let n = cfg.resolution;
    if img.width() != n || img.height() != n {
        return Err(PolicyError::ResolutionMismatch { expected: n, width: img.width(), height: img.height() });
    }
    let p = cfg.patch;
    let per_side = n / p;
    let data = img.data();
    let mut out = Vec::with_capacity(n * n * 3);
    for pr in 0..per_side {
        for pc in 0..per_side {
            for r in 0..p {
                let start = ((pr * p + r) * n + pc * p) * 3;
                out.extend_from_slice(&data[start..start + p * 3]);
            }
        }
    }
    Ok(out)
}

/// Network-space triple for an action: displacements over `max_step` and
/// the aperture mapped to `[-1, 1]`.
pub fn normalize_action(a: &Action, max_step: f64) -> [f64; 3] {
    [a.dx / max_step, a.dy / max_step, 2.0 * a.aperture - 1.0]
}

/// Inverse of [`normalize_action`] with displacements clamped to the step
/// bound and the aperture command snapped to open or closed.
pub fn denormalize_action(v: [f64; 3], max_step: f64) -> Action {
    let d = |x: f64| (x * max_step).clamp(-max_step, max_step);
    Action::new(d(v[0]), d(v[1]), if v[2] >= 0.0 { 1.0 } else { 0.0 })
}

/// Per-layer FiLM parameters for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEmbedding {
    pub gammas: Vec<Vec<f64>>,
    pub betas: Vec<Vec<f64>>,
}

impl ConditionEmbedding {
    /// The neutral conditioning `(γ, β) = (1, 0)` on every layer.
    pub fn identity(cfg: &PolicyConfig) -> Self {
        Self {
            gammas: vec![vec![1.0; cfg.denoiser_hidden]; cfg.denoiser_layers],
            betas: vec![vec![0.0; cfg.denoiser_hidden]; cfg.denoiser_layers],
        }
    }

    fn from_raw(raw: &[f64], cfg: &PolicyConfig) -> Self {
        let h = cfg.denoiser_hidden;
        let mut gammas = Vec::new();
        let mut betas = Vec::new();
        for l in 0..cfg.denoiser_layers {
            gammas.push(raw[2 * l * h..(2 * l + 1) * h].iter().map(|v| 1.0 + v).collect());
            betas.push(raw[(2 * l + 1) * h..(2 * l + 2) * h].to_vec());
        }
        Self { gammas, betas }
    }
}

/// Parameter indices of every sub-network.
#[derive(Debug, Clone)]
pub struct Net {
    pub patch: Linear,
    pub pos: usize,
    pub visual: Vec<Block>,
    pub words: usize,
    pub num_scale: usize,
    pub num_shift: usize,
    pub text_norm: Norm,
    pub text1: Linear,
    pub text2: Linear,
    pub proprio: Linear,
    pub fusion: Vec<Block>,
    pub fuse_norm: Norm,
    pub head: Linear,
    pub den_in: Linear,
    pub den_hidden: Vec<Linear>,
    pub den_out: Linear,
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub cfg: PolicyConfig,
    pub params: Params,
    pub net: Net,
    pub schedule: Schedule,
    /// Optimizer steps taken; zero means untrained.
    pub steps_trained: u64,
}

impl Policy {
    pub fn new(cfg: PolicyConfig) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let mut rng = rng_for(cfg.seed, &[STREAM_INIT]);
        let mut p = Params::default();
        let d = cfg.width;
        let patch = Linear::new(&mut p, "visual.patch", cfg.patch_dim(), d, 1.0, &mut rng);
        let pos = p.add_normal("visual.pos", cfg.patches(), d, 0.1, &mut rng);
        let visual = (0..cfg.visual_blocks)
            .map(|i| Block::new(&mut p, &format!("visual.block{i}"), d, cfg.heads, cfg.ff_hidden, &mut rng))
            .collect();
        let slots = SLOT_KINDS * cfg.number_slots;
        let words = p.add_normal("text.words", cfg.vocab_buckets, cfg.text_dim, 1.0, &mut rng);
        let num_scale = p.add_normal("text.num_scale", slots, cfg.text_dim, cfg.number_init, &mut rng);
        let num_shift = p.add_normal("text.num_shift", slots, cfg.text_dim, 1.0, &mut rng);
        let text_norm = Norm::new(&mut p, "text.norm", cfg.text_dim);
        let text1 = Linear::new(&mut p, "text.mlp1", cfg.text_dim, cfg.text_hidden, 1.0, &mut rng);
        let text2 = Linear::new(&mut p, "text.mlp2", cfg.text_hidden, d, 1.0, &mut rng);
        let proprio = Linear::new(&mut p, "proprio", Proprioception::DIM, d, 1.0, &mut rng);
        let fusion = (0..cfg.fusion_blocks)
            .map(|i| Block::new(&mut p, &format!("fusion.block{i}"), d, cfg.heads, cfg.ff_hidden, &mut rng))
            .collect();
        let fuse_norm = Norm::new(&mut p, "fusion.norm", d);
        // Small head: γ starts near 1 and β near 0.
        let head = Linear::new(&mut p, "fusion.head", d, cfg.film_width(), 0.05, &mut rng);
        let hd = cfg.denoiser_hidden;
        let den_in = Linear::new(&mut p, "denoiser.in", cfg.action_dim() + cfg.time_dim, hd, 1.0, &mut rng);
        let den_hidden = (1..cfg.denoiser_layers)
            .map(|i| Linear::new(&mut p, &format!("denoiser.hidden{i}"), hd, hd, 1.0, &mut rng))
            .collect();
        let den_out = Linear::new(&mut p, "denoiser.out", hd, cfg.action_dim(), 0.5, &mut rng);
        let schedule = Schedule::linear(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end);
        Ok(Self {
            net: Net {
                patch,
                pos,
                visual,
                words,
                num_scale,
                num_shift,
                text_norm,
                text1,
                text2,
                proprio,
                fusion,
                fuse_norm,
                head,
                den_in,
                den_hidden,
                den_out,
            },
            cfg,
            params: p,
            schedule,
            steps_trained: 0,
        })
    }

    /// Parameter indices whose names start with `prefix`.
    pub fn param_group(&self, prefix: &str) -> Vec<usize> {
        (0..self.params.names.len()).filter(|&i| self.params.names[i].starts_with(prefix)).collect()
    }

    /// Patch tokens (`patches × d`) for each input.
    pub fn visual_tokens(&self, tape: &mut Tape, inputs: &[&Encoded]) -> Vec<Var> {
        let np = self.cfg.patches();
        let pd = self.cfg.patch_dim();
        let mut m = Mat::zeros((inputs.len() * np, pd));
        for (b, e) in inputs.iter().enumerate() {
            assert_eq!(e.patches.len(), np * pd, "patch buffer size");
            let dst = m.as_slice_mut().expect("standard layout");
            for (k, v) in e.patches.iter().enumerate() {
                dst[b * np * pd + k] = *v as f64 / 255.0 - 0.5;
            }
        }
        let x = tape.constant(m);
        let proj = self.net.patch.forward(tape, &self.params, x);
        let pos = tape.param(&self.params, self.net.pos);
        (0..inputs.len())
            .map(|b| {
                let rows = tape.slice_rows(proj, b * np, np);
                let mut t = tape.add(rows, pos);
                for blk in &self.net.visual {
                    t = blk.forward(tape, &self.params, t);
                }
                t
            })
            .collect()
    }

    /// One text token per bag (`batch × d`).
    pub fn text_tokens(&self, tape: &mut Tape, bags: &[&TextBag]) -> Var {
        let cfg = &self.cfg;
        let slots = SLOT_KINDS * cfg.number_slots;
        let scale = 1.0 / cfg.max_text_len as f64;
        let mut cw = Mat::zeros((bags.len(), cfg.vocab_buckets));
        let mut cv = Mat::zeros((bags.len(), slots));
        let mut cb = Mat::zeros((bags.len(), slots));
        for (i, b) in bags.iter().enumerate() {
            for &(w, c) in &b.words {
                cw[[i, w]] += c * scale;
            }
            // Values enter centred on the middle of the workspace.
            for &(s, v, c) in &b.numbers {
                cv[[i, s]] += (v - 0.5 * c) * scale;
                cb[[i, s]] += c * scale;
            }
        }
        let (cw, cv, cb) = (tape.constant(cw), tape.constant(cv), tape.constant(cb));
        let words = tape.param(&self.params, self.net.words);
        let a = tape.param(&self.params, self.net.num_scale);
        let s = tape.param(&self.params, self.net.num_shift);
        let pw = tape.matmul(cw, words);
        let pv = tape.matmul(cv, a);
        let pb = tape.matmul(cb, s);
        let pooled = tape.add(pw, pv);
        let pooled = tape.add(pooled, pb);
        let h = self.net.text_norm.forward(tape, &self.params, pooled);
        let h = self.net.text1.forward(tape, &self.params, h);
        let h = tape.gelu(h);
        self.net.text2.forward(tape, &self.params, h)
    }

    /// Affine proprioception tokens (`batch × d`).
    pub fn proprio_tokens(&self, tape: &mut Tape, feats: &[[f64; Proprioception::DIM]]) -> Var {
        let m = Mat::from_shape_fn((feats.len(), Proprioception::DIM), |(i, j)| feats[i][j]);
        let x = tape.constant(m);
        self.net.proprio.forward(tape, &self.params, x)
    }

    /// The proprioception token for a single state.
    pub fn proprio_token(&self, prop: &Proprioception) -> Vec<f64> {
        let mut tape = Tape::new();
        let v = self.proprio_tokens(&mut tape, &[prop.features(self.cfg.max_step)]);
        tape.value(v).row(0).to_vec()
    }

    /// Runs the fusion blocks over `[visual; text; proprio]` and mean-pools
    /// to a `1 × d` summary.
    pub fn fuse(&self, tape: &mut Tape, visual: Var, text: Option<Var>, proprio: Var) -> Result<Var, PolicyError> {
        let d = self.cfg.width;
        let widths = [Some(visual), text, Some(proprio)].into_iter().flatten().map(|v| tape.shape(v).1);
        if widths.clone().any(|w| w != d) {
            return Err(PolicyError::WidthMismatch(format!(
                "expected width {d}, got {:?}",
                widths.collect::<Vec<_>>()
            )));
        }
        let parts: Vec<Var> = [Some(visual), text, Some(proprio)].into_iter().flatten().collect();
        let mut x = tape.concat_rows(&parts);
        for blk in &self.net.fusion {
            x = blk.forward(tape, &self.params, x);
        }
        Ok(tape.mean_rows(x))
    }

    /// Raw FiLM projection (`batch × film_width`) for a batch of inputs.
    pub fn condition(&self, tape: &mut Tape, inputs: &[&Encoded]) -> Result<Var, PolicyError> {
        let visual = self.visual_tokens(tape, inputs);
        let text = if self.cfg.mode.uses_text() {
            let bags: Vec<&TextBag> =
                inputs.iter().map(|e| e.text.as_ref().ok_or(PolicyError::TextPresence)).collect::<Result<_, _>>()?;
            Some(self.text_tokens(tape, &bags))
        } else {
            if inputs.iter().any(|e| e.text.is_some()) {
                return Err(PolicyError::TextPresence);
            }
            None
        };
        let feats: Vec<_> = inputs.iter().map(|e| e.proprio).collect();
        let prop = self.proprio_tokens(tape, &feats);
        let mut pooled = Vec::with_capacity(inputs.len());
        for (b, v) in visual.into_iter().enumerate() {
            let t = text.map(|t| tape.slice_rows(t, b, 1));
            let p = tape.slice_rows(prop, b, 1);
            pooled.push(self.fuse(tape, v, t, p)?);
        }
        let pooled = tape.concat_rows(&pooled);
        let h = self.net.fuse_norm.forward(tape, &self.params, pooled);
        Ok(self.net.head.forward(tape, &self.params, h))
    }

    /// Splits the raw FiLM projection into per-layer `(γ, β)` with every row
    /// repeated `repeat` times.
    pub fn film_vars(&self, tape: &mut Tape, raw: Var, repeat: usize) -> Vec<(Var, Var)> {
        let h = self.cfg.denoiser_hidden;
        let rows = tape.shape(raw).0;
        let ones = tape.constant(Mat::ones((rows, h)));
        (0..self.cfg.denoiser_layers)
            .map(|l| {
                let dg = tape.slice_cols(raw, 2 * l * h, h);
                let g = tape.add(dg, ones);
                let b = tape.slice_cols(raw, (2 * l + 1) * h, h);
                if repeat == 1 {
                    (g, b)
                } else {
                    (tape.repeat_rows(g, repeat), tape.repeat_rows(b, repeat))
                }
            })
            .collect()
    }

    /// Noise prediction for `x` (`rows × 3H`) at per-row steps `t`.
    pub fn denoise_tape(&self, tape: &mut Tape, x: Var, t: &[usize], film: &[(Var, Var)]) -> Var {
        let td = self.cfg.time_dim;
        let temb = Mat::from_shape_fn((t.len(), td), |(i, j)| time_embedding(t[i], td)[j]);
        let temb = tape.constant(temb);
        let input = tape.concat_cols(&[x, temb]);
        let mut h = self.net.den_in.forward(tape, &self.params, input);
        for (l, (g, b)) in film.iter().enumerate() {
            if l > 0 {
                h = self.net.den_hidden[l - 1].forward(tape, &self.params, h);
            }
            let m = tape.mul(h, *g);
            let m = tape.add(m, *b);
            h = tape.gelu(m);
        }
        self.net.den_out.forward(tape, &self.params, h)
    }

    /// FiLM parameters for one input.
    pub fn condition_embedding(&self, input: &Encoded) -> Result<ConditionEmbedding, PolicyError> {
        let mut tape = Tape::new();
        let raw = self.condition(&mut tape, &[input])?;
        let row = tape.value(raw).row(0).to_vec();
        Ok(ConditionEmbedding::from_raw(&row, &self.cfg))
    }

    /// Predicted noise for `x` (`rows × 3H`) at step `t`.
    pub fn denoise(&self, x: &Mat, t: usize, cond: &ConditionEmbedding) -> Result<Mat, PolicyError> {
        let cfg = &self.cfg;
        if x.ncols() != cfg.action_dim() {
            return Err(PolicyError::DimMismatch(format!("chunk has {} values, expected {}", x.ncols(), cfg.action_dim())));
        }
        if cond.gammas.len() != cfg.denoiser_layers
            || cond.gammas.iter().chain(&cond.betas).any(|v| v.len() != cfg.denoiser_hidden)
        {
            return Err(PolicyError::DimMismatch("condition embedding shape".into()));
        }
        let rows = x.nrows();
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let film: Vec<(Var, Var)> = cond
            .gammas
            .iter()
            .zip(&cond.betas)
            .map(|(g, b)| {
                let gm = Mat::from_shape_fn((rows, g.len()), |(_, j)| g[j]);
                let bm = Mat::from_shape_fn((rows, b.len()), |(_, j)| b[j]);
                (tape.constant(gm), tape.constant(bm))
            })
            .collect();
        let out = self.denoise_tape(&mut tape, xv, &vec![t; rows], &film);
        Ok(tape.value(out).clone())
    }

    /// Reverse diffusion from seeded Gaussian noise to a normalized chunk
    /// (`H × 3`, entries in `[-1, 1]`).
    pub fn sample_normalized<R: Rng>(&self, input: &Encoded, rng: &mut R) -> Result<Mat, PolicyError> {
        if self.steps_trained == 0 {
            return Err(PolicyError::UntrainedModel);
        }
        let cond = self.condition_embedding(input)?;
        let n = self.cfg.action_dim();
        let mut x = Mat::from_shape_fn((1, n), |_| rng.sample::<f64, _>(StandardNormal));
        for t in (0..self.schedule.steps()).rev() {
            let eps = self.denoise(&x, t, &cond)?;
            let z = Mat::from_shape_fn((1, n), |_| if t > 0 { rng.sample::<f64, _>(StandardNormal) } else { 0.0 });
            x = self.schedule.reverse_step(&x, &eps, t, &z, 1.0);
        }
        Ok(x.into_shape_with_order((self.cfg.horizon, 3)).expect("chunk shape"))
    }

    /// Samples and decodes an executable action chunk.
    pub fn sample_actions<R: Rng>(&self, input: &Encoded, rng: &mut R) -> Result<ActionChunk, PolicyError> {
        let x = self.sample_normalized(input, rng)?;
        let actions = x.outer_iter().map(|r| denormalize_action([r[0], r[1], r[2]], self.cfg.max_step)).collect();
        Ok(ActionChunk { actions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::tokenizer::encode_bag;

    fn small_cfg() -> PolicyConfig {
        PolicyConfig { resolution: 32, patch: 8, width: 8, ff_hidden: 8, text_dim: 8, text_hidden: 8, denoiser_hidden: 16, ..Default::default() }
    }

    fn input(cfg: &PolicyConfig, shade: u8) -> Encoded {
        let mut img = Raster::filled(cfg.resolution, cfg.resolution, [shade, 100, 50]);
        img.set(3, 4, [255, 0, 0]);
        Encoded {
            patches: patchify(&img, cfg).unwrap(),
            text: Some(encode_bag("grasp at (0.500, 0.250)", cfg).unwrap()),
            proprio: [0.2, 0.3, 1.0, 0.0, 0.1, -0.4],
        }
    }

    #[test]
    fn shapes() {
        let cfg = PolicyConfig::default();
        let policy = Policy::new(cfg.clone()).unwrap();
        let e = Encoded {
            patches: patchify(&Raster::filled(96, 96, [10, 20, 30]), &cfg).unwrap(),
            text: Some(encode_bag("place at (0.100, 0.200)", &cfg).unwrap()),
            proprio: [0.0; 6],
        };
        let mut tape = Tape::new();
        let vis = policy.visual_tokens(&mut tape, &[&e]);
        assert_eq!(tape.shape(vis[0]), (36, 32));
        let txt = policy.text_tokens(&mut tape, &[e.text.as_ref().unwrap()]);
        assert_eq!(tape.shape(txt), (1, 32));
        let c = policy.condition_embedding(&e).unwrap();
        assert_eq!((c.gammas.len(), c.betas.len()), (cfg.denoiser_layers, cfg.denoiser_layers));
        let out = policy.denoise(&Mat::zeros((1, cfg.action_dim())), 3, &c).unwrap();
        assert_eq!(out.dim(), (1, 3 * cfg.horizon));
        assert_eq!(out, policy.denoise(&Mat::zeros((1, cfg.action_dim())), 3, &c).unwrap());
    }

    #[test]
    fn patchify_orders_patches_row_major() {
        let cfg = small_cfg();
        let mut img = Raster::filled(32, 32, [0, 0, 0]);
        img.set(8, 17, [7, 8, 9]);
        let p = patchify(&img, &cfg).unwrap();
        // Row 8 col 17 is patch (1, 2) -> index 6, local (0, 1).
        let base = 6 * cfg.patch_dim() + 3;
        assert_eq!(&p[base..base + 3], &[7, 8, 9]);
        assert!(patchify(&Raster::filled(16, 16, [0; 3]), &cfg).is_err());
    }

    #[test]
    fn one_patch_difference_changes_tokens() {
        let cfg = small_cfg();
        let policy = Policy::new(cfg.clone()).unwrap();
        let a = input(&cfg, 10);
        let mut b = a.clone();
        b.patches[5] = b.patches[5].wrapping_add(90);
        let mut tape = Tape::new();
        let ta = policy.visual_tokens(&mut tape, &[&a])[0];
        let tb = policy.visual_tokens(&mut tape, &[&b])[0];
        assert_ne!(tape.value(ta), tape.value(tb));
    }

    #[test]
    fn zero_image_zero_offsets_gives_identical_tokens() {
        let cfg = small_cfg();
        let mut policy = Policy::new(cfg.clone()).unwrap();
        policy.params.values[policy.net.pos].fill(0.0);
        policy.params.values[policy.net.patch.b].fill(0.0);
        // A uniform mid-gray image maps to the all-zero patch input.
        let e = Encoded { patches: vec![128; cfg.patches() * cfg.patch_dim()], ..input(&cfg, 0) };
        let mut e0 = e.clone();
        e0.patches.iter_mut().for_each(|v| *v = 0);
        for enc in [e, e0] {
            let mut tape = Tape::new();
            let t = policy.visual_tokens(&mut tape, &[&enc])[0];
            let v = tape.value(t);
            for r in 1..v.nrows() {
                assert_eq!(v.row(r), v.row(0));
            }
        }
    }

    #[test]
    fn text_presence_is_checked() {
        let cfg = small_cfg();
        let policy = Policy::new(PolicyConfig { mode: crate::policy::Mode::NoTextual, ..cfg.clone() }).unwrap();
        assert!(matches!(policy.condition_embedding(&input(&cfg, 1)), Err(PolicyError::TextPresence)));
        let mut tape = Tape::new();
        let v = tape.constant(Mat::zeros((4, 8)));
        let bad = tape.constant(Mat::zeros((1, 5)));
        let p = tape.constant(Mat::zeros((1, 8)));
        assert!(matches!(policy.fuse(&mut tape, v, Some(bad), p), Err(PolicyError::WidthMismatch(_))));
    }

    #[test]
    fn fusion_is_permutation_invariant_over_patches() {
        let cfg = small_cfg();
        let policy = Policy::new(cfg.clone()).unwrap();
        let mut rng = rng_for(4, &[0]);
        let vis = Mat::from_shape_fn((16, 8), |_| rng.gen_range(-1.0..1.0));
        let mut perm: Vec<usize> = (0..16).collect();
        perm.reverse();
        perm.swap(3, 9);
        let shuffled = Mat::from_shape_fn((16, 8), |(i, j)| vis[[perm[i], j]]);
        let txt = Mat::from_shape_fn((1, 8), |_| rng.gen_range(-1.0..1.0));
        let prop = Mat::from_shape_fn((1, 8), |_| rng.gen_range(-1.0..1.0));
        let run = |v: &Mat| {
            let mut tape = Tape::new();
            let (a, b, c) = (tape.constant(v.clone()), tape.constant(txt.clone()), tape.constant(prop.clone()));
            let out = policy.fuse(&mut tape, a, Some(b), c).unwrap();
            tape.value(out).clone()
        };
        let (x, y) = (run(&vis), run(&shuffled));
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn untrained_policy_refuses_to_sample() {
        let cfg = small_cfg();
        let policy = Policy::new(cfg.clone()).unwrap();
        let mut rng = rng_for(0, &[0]);
        assert!(matches!(policy.sample_normalized(&input(&cfg, 3), &mut rng), Err(PolicyError::UntrainedModel)));
    }

    #[test]
    fn action_normalization_roundtrips_and_clamps() {
        let a = Action::new(0.02, -0.05, 1.0);
        assert_eq!(denormalize_action(normalize_action(&a, 0.05), 0.05), a);
        let b = denormalize_action([3.0, -7.0, -0.2], 0.05);
        assert_eq!((b.dx, b.dy, b.aperture), (0.05, -0.05, 0.0));
    }

    #[test]
    fn sampled_chunks_are_bounded_and_seeded() {
        let cfg = small_cfg();
        let mut policy = Policy::new(cfg.clone()).unwrap();
        policy.steps_trained = 1;
        policy.params.values[policy.net.den_out.b].fill(5.0);
        let e = input(&cfg, 2);
        let a = policy.sample_actions(&e, &mut rng_for(3, &[1])).unwrap();
        let b = policy.sample_actions(&e, &mut rng_for(3, &[1])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.actions.len(), cfg.horizon);
        assert!(a.is_valid(cfg.max_step));
    }

    #[test]
    fn identity_film_makes_denoiser_condition_free() {
        let cfg = small_cfg();
        let policy = Policy::new(cfg.clone()).unwrap();
        let id = ConditionEmbedding::identity(&cfg);
        let x = Mat::from_shape_fn((2, cfg.action_dim()), |(i, j)| (i * 7 + j) as f64 * 0.01);
        let a = policy.denoise(&x, 5, &id).unwrap();
        let c = policy.condition_embedding(&input(&cfg, 9)).unwrap();
        assert_ne!(a, policy.denoise(&x, 5, &c).unwrap());
        assert_eq!(a, policy.denoise(&x, 5, &ConditionEmbedding::identity(&cfg)).unwrap());
    }
}
