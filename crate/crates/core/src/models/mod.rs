//! The desk-scale model family: a variant-specific stem that maps
//! `[N,3,H,W]` pixels to `[N,192,H/8,W/8]` features, followed by a shared
//! residual backbone.
//!
//! ```text
//! stem ─► INIT ─► res block (192→128) ─► CONV1 ─► res block (128→128, /2) ─► CONV2 ─► GAP ─► FC
//! ```

mod mixture;
mod train;

pub use mixture::{make_interpolated_kernels, make_substituted_kernels, substituted_channel_count};
pub use train::{evaluate, predict, train, AdversarialSettings, EpochMetrics, TrainConfig};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::spectral::{sf_kernel_bank, BLOCK, CHANNELS, COLORS, LEVEL_SHIFT};
use crate::tensor::{glorot_init, Rng, RunningStats, Tape, Tensor, Var};
use crate::{Error, Result};

/// Output channels of both residual blocks.
pub const BACKBONE_WIDTH: usize = 128;
/// Channel widths of the three stride-2 convolutions of the baseline stem.
pub const BASELINE_WIDTHS: [usize; 3] = [24, 96, CHANNELS];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    /// Fixed block-DCT stem.
    Sf,
    /// Trainable 8x8 stride-8 stem, 3 -> 192 channels.
    C88,
    /// Three trainable 3x3 stride-2 convolutions.
    Baseline,
    /// `alpha * K_SF + (1 - alpha) * K_88`.
    Interp { alpha: f32 },
    /// Lowest-frequency `round(beta * 192)` filters from the SF bank.
    Subst { beta: f32 },
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Sf => write!(f, "sf"),
            Variant::C88 => write!(f, "c88"),
            Variant::Baseline => write!(f, "baseline"),
            Variant::Interp { alpha } => write!(f, "interp({alpha})"),
            Variant::Subst { beta } => write!(f, "subst({beta})"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let arg = |prefix: &str| -> Option<Result<f32>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            Some(
                inner
                    .parse::<f32>()
                    .map_err(|_| Error::InvalidArgument(format!("bad mixture weight in {s:?}"))),
            )
        };
        match s.as_str() {
            "sf" => Ok(Variant::Sf),
            "c88" => Ok(Variant::C88),
            "baseline" => Ok(Variant::Baseline),
            _ => {
                if let Some(a) = arg("interp") {
                    Ok(Variant::Interp { alpha: a? })
                } else if let Some(b) = arg("subst") {
                    Ok(Variant::Subst { beta: b? })
                } else {
                    Err(Error::InvalidArgument(format!("unknown model variant {s:?}")))
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(variant: Variant, num_classes: usize, height: usize, width: usize, seed: u64) -> Self {
        Self {
            variant,
            num_classes,
            height,
            width,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.height.is_multiple_of(BLOCK)
            || !self.width.is_multiple_of(BLOCK)
            || self.height == 0
            || self.width == 0
        {
            return Err(Error::NotBlockAligned {
                height: self.height,
                width: self.width,
            });
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        match self.variant {
            Variant::Interp { alpha: w } | Variant::Subst { beta: w } if !(0.0..=1.0).contains(&w) => {
                Err(Error::InvalidArgument(format!("mixture weight {w} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// Named activation capture points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Probe {
    Init,
    Conv1,
    Conv2,
    Fc,
}

impl Probe {
    pub const ALL: [Probe; 4] = [Probe::Init, Probe::Conv1, Probe::Conv2, Probe::Fc];

    pub fn name(self) -> &'static str {
        match self {
            Probe::Init => "INIT",
            Probe::Conv1 => "CONV1",
            Probe::Conv2 => "CONV2",
            Probe::Fc => "FC",
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainability {
    Trainable,
    Frozen,
    /// The leading output channels are frozen, the rest train.
    FrozenPrefix(usize),
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainability: Trainability,
}

impl Param {
    /// Per-element frozen flags, or `None` when every element trains.
    pub fn frozen_mask(&self) -> Option<Vec<bool>> {
        match self.trainability {
            Trainability::Trainable => None,
            Trainability::Frozen => Some(vec![true; self.value.len()]),
            Trainability::FrozenPrefix(channels) => {
                let per = self.value.item_len();
                Some((0..self.value.len()).map(|i| i / per < channels).collect())
            }
        }
    }

    pub fn trainable_count(&self) -> usize {
        match self.trainability {
            Trainability::Trainable => self.value.len(),
            Trainability::Frozen => 0,
            Trainability::FrozenPrefix(c) => self.value.len() - c * self.value.item_len(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvBn {
    conv: usize,
    gamma: usize,
    beta: usize,
    bn: usize,
    stride: usize,
    pad: usize,
}

#[derive(Clone, Copy, Debug)]
struct ResBlock {
    a: ConvBn,
    b: ConvBn,
    proj: ConvBn,
}

#[derive(Clone, Copy, Debug)]
enum Stem {
    Block { kernel: usize },
    Baseline([ConvBn; 3]),
}

#[derive(Clone, Debug)]
struct Layout {
    stem: Stem,
    block1: ResBlock,
    block2: ResBlock,
    fc_weight: usize,
    fc_bias: usize,
}

/// A built model: parameters, batch-norm statistics and the wiring between
/// them.
#[derive(Clone, Debug)]
pub struct ModelInstance {
    spec: ModelSpec,
    params: Vec<Param>,
    bn_names: Vec<String>,
    bn: Vec<RunningStats>,
    layout: Layout,
}

/// How batch norm behaves during a recorded forward pass.
pub enum BnMode<'a> {
    Eval,
    Train(&'a mut [RunningStats]),
}

/// Handles into a recorded forward pass.
pub struct Recorded {
    pub logits: Var,
    pub probes: [Var; 4],
    /// Tape handle of each parameter, `None` for parameters recorded as
    /// constants.
    pub params: Vec<Option<Var>>,
}

/// Logits plus the activations captured at every probe point.
#[derive(Clone, Debug)]
pub struct ProbeOutput {
    pub logits: Tensor,
    pub activations: [Tensor; 4],
}

impl ProbeOutput {
    pub fn get(&self, probe: Probe) -> &Tensor {
        &self.activations[probe as usize]
    }
}

struct Builder {
    root: Rng,
    params: Vec<Param>,
    bn_names: Vec<String>,
    bn: Vec<RunningStats>,
}

impl Builder {
    fn param(&mut self, name: &str, value: Tensor, trainability: Trainability) -> usize {
        self.params.push(Param {
            name: name.to_string(),
            value,
            trainability,
        });
        self.params.len() - 1
    }

    fn glorot_conv(&mut self, name: &str, out: usize, inp: usize, k: usize) -> Result<Tensor> {
        let mut rng = self.root.split_named(name);
        glorot_init(&mut rng, &[out, inp, k, k], inp * k * k, out * k * k)
    }

    fn conv_bn(&mut self, name: &str, inp: usize, out: usize, k: usize, stride: usize) -> Result<ConvBn> {
        let w = self.glorot_conv(&format!("{name}.conv"), out, inp, k)?;
        let conv = self.param(&format!("{name}.conv"), w, Trainability::Trainable);
        let gamma = self.param(&format!("{name}.gamma"), Tensor::ones(&[out]), Trainability::Trainable);
        let beta = self.param(&format!("{name}.beta"), Tensor::zeros(&[out]), Trainability::Trainable);
        self.bn_names.push(format!("{name}.bn"));
        self.bn.push(RunningStats::new(out));
        Ok(ConvBn {
            conv,
            gamma,
            beta,
            bn: self.bn.len() - 1,
            stride,
            pad: k / 2,
        })
    }

    fn res_block(&mut self, name: &str, inp: usize, out: usize, stride: usize) -> Result<ResBlock> {
        Ok(ResBlock {
            a: self.conv_bn(&format!("{name}.a"), inp, out, 3, stride)?,
            b: self.conv_bn(&format!("{name}.b"), out, out, 3, 1)?,
            proj: self.conv_bn(&format!("{name}.proj"), inp, out, 1, stride)?,
        })
    }
}

/// Name of the single 8x8 stem parameter used by the SF, C88 and mixture
/// variants.
pub const STEM_KERNEL: &str = "stem.kernel";

/// Seeded C88 stem kernels; every variant with the same seed draws the same
/// values.
pub fn c88_kernels(seed: u64) -> Result<Tensor> {
    let k = BLOCK;
    let mut rng = Rng::new(seed).split_named(STEM_KERNEL);
    glorot_init(&mut rng, &[CHANNELS, COLORS, k, k], COLORS * k * k, CHANNELS * k * k)
}

pub fn build_model(spec: &ModelSpec) -> Result<ModelInstance> {
    spec.validate()?;
    let mut b = Builder {
        root: Rng::new(spec.seed),
        params: Vec::new(),
        bn_names: Vec::new(),
        bn: Vec::new(),
    };
    let stem = match spec.variant {
        Variant::Baseline => {
            let [w0, w1, w2] = BASELINE_WIDTHS;
            Stem::Baseline([
                b.conv_bn("stem.0", COLORS, w0, 3, 2)?,
                b.conv_bn("stem.1", w0, w1, 3, 2)?,
                b.conv_bn("stem.2", w1, w2, 3, 2)?,
            ])
        }
        Variant::Sf => {
            let bank = sf_kernel_bank().into_tensor();
            Stem::Block {
                kernel: b.param(STEM_KERNEL, bank, Trainability::Frozen),
            }
        }
        Variant::C88 => Stem::Block {
            kernel: b.param(STEM_KERNEL, c88_kernels(spec.seed)?, Trainability::Trainable),
        },
        Variant::Interp { alpha } => {
            let k = make_interpolated_kernels(&sf_kernel_bank(), &c88_kernels(spec.seed)?, alpha)?;
            let t = if alpha == 1.0 {
                Trainability::Frozen
            } else {
                Trainability::Trainable
            };
            Stem::Block {
                kernel: b.param(STEM_KERNEL, k, t),
            }
        }
        Variant::Subst { beta } => {
            let k = make_substituted_kernels(&sf_kernel_bank(), &c88_kernels(spec.seed)?, beta)?;
            let frozen = substituted_channel_count(beta);
            let t = match frozen {
                0 => Trainability::Trainable,
                CHANNELS => Trainability::Frozen,
                n => Trainability::FrozenPrefix(n),
            };
            Stem::Block {
                kernel: b.param(STEM_KERNEL, k, t),
            }
        }
    };
    let block1 = b.res_block("block1", CHANNELS, BACKBONE_WIDTH, 1)?;
    let block2 = b.res_block("block2", BACKBONE_WIDTH, BACKBONE_WIDTH, 2)?;
    let mut fc_rng = b.root.split_named("fc.weight");
    let fc_w = glorot_init(
        &mut fc_rng,
        &[spec.num_classes, BACKBONE_WIDTH],
        BACKBONE_WIDTH,
        spec.num_classes,
    )?;
    let fc_weight = b.param("fc.weight", fc_w, Trainability::Trainable);
    let fc_bias = b.param("fc.bias", Tensor::zeros(&[spec.num_classes]), Trainability::Trainable);
    Ok(ModelInstance {
        spec: spec.clone(),
        params: b.params,
        bn_names: b.bn_names,
        bn: b.bn,
        layout: Layout {
            stem,
            block1,
            block2,
            fc_weight,
            fc_bias,
        },
    })
}

impl ModelInstance {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Stem kernels of the 8x8 variants; `None` for the baseline.
    pub fn stem_kernels(&self) -> Option<&Tensor> {
        match self.layout.stem {
            Stem::Block { kernel } => Some(&self.params[kernel].value),
            Stem::Baseline(_) => None,
        }
    }

    pub fn batch_norm_stats(&self) -> impl Iterator<Item = (&str, &RunningStats)> {
        self.bn_names.iter().map(String::as_str).zip(&self.bn)
    }

    pub fn set_batch_norm_stats(&mut self, name: &str, stats: RunningStats) -> Result<()> {
        let i = self
            .bn_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Format(format!("unknown batch-norm layer {name}")))?;
        if stats.mean.len() != self.bn[i].mean.len() || stats.var.len() != self.bn[i].var.len() {
            return Err(Error::shape(
                "batch-norm stats",
                format!("{name}: channel count differs"),
            ));
        }
        self.bn[i] = stats;
        Ok(())
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.params.iter().map(Param::trainable_count).sum()
    }

    pub(crate) fn bn_stats_mut(&mut self) -> &mut Vec<RunningStats> {
        &mut self.bn
    }

    fn conv_bn(&self, tape: &mut Tape, x: Var, layer: &ConvBn, vars: &[Var], bn: &mut BnMode<'_>) -> Result<Var> {
        let y = tape.conv2d(x, vars[layer.conv], layer.stride, layer.pad)?;
        match bn {
            BnMode::Eval => {
                let mut stats = self.bn[layer.bn].clone();
                tape.batch_norm(y, vars[layer.gamma], vars[layer.beta], &mut stats, false)
            }
            BnMode::Train(stats) => tape.batch_norm(y, vars[layer.gamma], vars[layer.beta], &mut stats[layer.bn], true),
        }
    }

    fn res_block(&self, tape: &mut Tape, x: Var, block: &ResBlock, vars: &[Var], bn: &mut BnMode<'_>) -> Result<Var> {
        let a = self.conv_bn(tape, x, &block.a, vars, bn)?;
        let a = tape.relu(a)?;
        let b = self.conv_bn(tape, a, &block.b, vars, bn)?;
        let skip = self.conv_bn(tape, x, &block.proj, vars, bn)?;
        let sum = tape.add(b, skip)?;
        tape.relu(sum)
    }

    /// Records a forward pass of `input` (`[N,3,H,W]`, already on the tape).
    /// Trainable parameters become tape leaves when `track_params` is set;
    /// everything else is recorded as a constant.
    pub fn record(&self, tape: &mut Tape, input: Var, mut bn: BnMode<'_>, track_params: bool) -> Result<Recorded> {
        let s = tape.value(input).shape().to_vec();
        if s.len() != 4 || s[1] != COLORS || s[2] != self.spec.height || s[3] != self.spec.width {
            return Err(Error::shape(
                "model input",
                format!("expected [N, 3, {}, {}], got {s:?}", self.spec.height, self.spec.width),
            ));
        }
        let mut handles = Vec::with_capacity(self.params.len());
        let mut vars = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let leaf = track_params && p.trainability != Trainability::Frozen;
            let v = if leaf {
                tape.leaf(p.value.clone())
            } else {
                tape.constant(p.value.clone())
            };
            handles.push(leaf.then_some(v));
            vars.push(v);
        }
        let centred = tape.add_scalar(input, -LEVEL_SHIFT)?;
        let init = match &self.layout.stem {
            Stem::Block { kernel } => tape.conv2d(centred, vars[*kernel], BLOCK, 0)?,
            Stem::Baseline(layers) => {
                let mut h = centred;
                for layer in layers {
                    let y = self.conv_bn(tape, h, layer, &vars, &mut bn)?;
                    h = tape.relu(y)?;
                }
                h
            }
        };
        let conv1 = self.res_block(tape, init, &self.layout.block1, &vars, &mut bn)?;
        let conv2 = self.res_block(tape, conv1, &self.layout.block2, &vars, &mut bn)?;
        let pooled = tape.global_avg_pool(conv2)?;
        let logits = tape.linear(pooled, vars[self.layout.fc_weight], vars[self.layout.fc_bias])?;
        Ok(Recorded {
            logits,
            probes: [init, conv1, conv2, logits],
            params: handles,
        })
    }

    /// Eval-mode logits for a batch of images.
    pub fn logits(&self, images: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let r = self.record(&mut tape, x, BnMode::Eval, false)?;
        Ok(tape.value(r.logits).clone())
    }

    /// Eval-mode forward pass capturing every probe point.
    pub fn forward_with_probes(&self, images: &Tensor) -> Result<ProbeOutput> {
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let r = self.record(&mut tape, x, BnMode::Eval, false)?;
        let activations = r.probes.map(|p| tape.value(p).clone());
        Ok(ProbeOutput {
            logits: tape.value(r.logits).clone(),
            activations,
        })
    }
}
