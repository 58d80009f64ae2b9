//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written from the textbook definitions with plain f64
//! loops and shares no code with the library's fast paths.

#![allow(dead_code)]

use cnntree::ensemble::{EnsembleTree, ScoreModel, TreeSpec};
use cnntree::numerics::{Layer, Padding, Tensor};
use cnntree::Result;
use rand::Rng;

pub fn to64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Output extent and leading pad, straight from the convolution arithmetic.
pub fn geometry(n: usize, k: usize, s: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Valid => ((n - k) / s + 1, 0),
        Padding::Same => {
            let out = n.div_ceil(s);
            let need = ((out - 1) * s + k) as isize - n as isize;
            (out, (need.max(0) / 2) as usize)
        }
    }
}

/// `x` is `[h, w, c]`, `k` is `[kk, kk, c, f]`; zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    k: &[f64],
    kk: usize,
    f: usize,
    b: &[f64],
    stride: usize,
    padding: Padding,
) -> (Vec<f64>, (usize, usize, usize)) {
    let (oh, pt) = geometry(h, kk, stride, padding);
    let (ow, pl) = geometry(w, kk, stride, padding);
    let mut out = vec![0.0; oh * ow * f];
    for oy in 0..oh {
        for ox in 0..ow {
            for fi in 0..f {
                let mut acc = b[fi];
                for ky in 0..kk {
                    for kx in 0..kk {
                        let iy = (oy * stride + ky) as isize - pt as isize;
                        let ix = (ox * stride + kx) as isize - pl as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c {
                            let xv = x[(iy as usize * w + ix as usize) * c + ci];
                            let kv = k[((ky * kk + kx) * c + ci) * f + fi];
                            acc += xv * kv;
                        }
                    }
                }
                out[(oy * ow + ox) * f + fi] = acc;
            }
        }
    }
    (out, (oh, ow, f))
}

/// Returns the pooled values, the flat argmax index of each window (first in
/// scan order on ties) and the gap between the best and runner-up value.
pub fn maxpool(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    win: usize,
    stride: usize,
) -> (Vec<f64>, Vec<usize>, f64, (usize, usize, usize)) {
    let oh = (h - win) / stride + 1;
    let ow = (w - win) / stride + 1;
    let mut out = Vec::new();
    let mut arg = Vec::new();
    let mut gap = f64::INFINITY;
    for oy in 0..oh {
        for ox in 0..ow {
            for ci in 0..c {
                let mut vals = Vec::new();
                for wy in 0..win {
                    for wx in 0..win {
                        let i = ((oy * stride + wy) * w + ox * stride + wx) * c + ci;
                        vals.push((x[i], i));
                    }
                }
                let (mut best, mut bi) = vals[0];
                for &(v, i) in &vals[1..] {
                    if v > best {
                        best = v;
                        bi = i;
                    }
                }
                for &(v, i) in &vals {
                    if i != bi {
                        gap = gap.min(best - v);
                    }
                }
                out.push(best);
                arg.push(bi);
            }
        }
    }
    (out, arg, gap, (oh, ow, c))
}

/// `w` is `[n, m]` row-major.
pub fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let m = b.len();
    (0..m)
        .map(|j| b[j] + x.iter().enumerate().map(|(i, xi)| xi * w[i * m + j]).sum::<f64>())
        .collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Per-layer parameter values in f64, in the order the network lists them.
#[derive(Clone, Debug)]
pub struct OracleNet {
    pub layers: Vec<OracleLayer>,
}

#[derive(Clone, Debug)]
pub enum OracleLayer {
    Conv {
        kernels: Vec<f64>,
        kk: usize,
        f: usize,
        bias: Vec<f64>,
        stride: usize,
        padding: Padding,
    },
    Pool {
        win: usize,
        stride: usize,
    },
    Relu,
    Gap,
    Dense {
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
}

/// Kink bookkeeping from one oracle forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub relu_signs: Vec<bool>,
    pub pool_args: Vec<usize>,
    /// Smallest |pre-activation| seen at any ReLU.
    pub relu_margin: f64,
    /// Smallest best-vs-runner-up gap seen in any pool window.
    pub pool_margin: f64,
}

impl OracleNet {
    pub fn from_layers(layers: &[Layer]) -> Self {
        let layers = layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d(c) => {
                    let s = c.kernels.value.shape();
                    OracleLayer::Conv {
                        kernels: to64(&c.kernels.value),
                        kk: s[0],
                        f: s[3],
                        bias: to64(&c.bias.value),
                        stride: c.stride,
                        padding: c.padding,
                    }
                }
                Layer::MaxPool2d(p) => OracleLayer::Pool {
                    win: p.window,
                    stride: p.stride,
                },
                Layer::Relu => OracleLayer::Relu,
                Layer::GlobalAvgPool => OracleLayer::Gap,
                Layer::Dense(d) => OracleLayer::Dense {
                    weights: to64(&d.weights.value),
                    bias: to64(&d.bias.value),
                },
            })
            .collect();
        Self { layers }
    }

    /// Mutable views of every parameter buffer, kernels/weights before bias.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                OracleLayer::Conv { kernels, bias, .. } => {
                    out.push(kernels);
                    out.push(bias);
                }
                OracleLayer::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn forward(&self, image: &[f64], dims: (usize, usize, usize)) -> (Vec<f64>, Pattern) {
        let mut x = image.to_vec();
        let mut d = dims;
        let mut pattern = Pattern {
            relu_signs: Vec::new(),
            pool_args: Vec::new(),
            relu_margin: f64::INFINITY,
            pool_margin: f64::INFINITY,
        };
        for l in &self.layers {
            match l {
                OracleLayer::Conv {
                    kernels,
                    kk,
                    f,
                    bias,
                    stride,
                    padding,
                } => {
                    let (y, nd) = conv(&x, d, kernels, *kk, *f, bias, *stride, *padding);
                    x = y;
                    d = nd;
                }
                OracleLayer::Pool { win, stride } => {
                    let (y, arg, gap, nd) = maxpool(&x, d, *win, *stride);
                    pattern.pool_args.extend(arg);
                    pattern.pool_margin = pattern.pool_margin.min(gap);
                    x = y;
                    d = nd;
                }
                OracleLayer::Relu => {
                    for &v in &x {
                        pattern.relu_signs.push(v > 0.0);
                        pattern.relu_margin = pattern.relu_margin.min(v.abs());
                    }
                    x = relu(&x);
                }
                OracleLayer::Gap => {
                    let (h, w, c) = d;
                    let mut g = vec![0.0; c];
                    for p in 0..h * w {
                        for ci in 0..c {
                            g[ci] += x[p * c + ci];
                        }
                    }
                    x = g.iter().map(|v| v / (h * w) as f64).collect();
                    d = (1, 1, c);
                }
                OracleLayer::Dense { weights, bias } => {
                    x = dense(&x, weights, bias);
                    d = (1, 1, x.len());
                }
            }
        }
        (x, pattern)
    }
}

/// Loss the library trains with: mean binary cross-entropy over sigmoid
/// outputs for two neurons, categorical cross-entropy over softmax otherwise.
pub fn loss(logits: &[f64], target: usize) -> f64 {
    let eps = 1e-12;
    if logits.len() == 2 {
        logits
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let p = sigmoid(z).clamp(eps, 1.0 - eps);
                let t = if i == target { 1.0 } else { 0.0 };
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 2.0
    } else {
        -softmax(logits)[target].clamp(eps, 1.0).ln()
    }
}

/// Central difference of `loss` in parameter `param`, coordinate `coord`.
/// `None` when either probe changes the ReLU/max-pool pattern, i.e. the probe
/// straddles a kink.
pub fn central_difference(
    net: &OracleNet,
    image: &[f64],
    dims: (usize, usize, usize),
    target: usize,
    param: usize,
    coord: usize,
    h: f64,
) -> Option<f64> {
    let (_, base) = net.forward(image, dims);
    let probe = |delta: f64| {
        let mut n = net.clone();
        n.params_mut()[param][coord] += delta;
        let (out, pat) = n.forward(image, dims);
        (loss(&out, target), pat)
    };
    let (lp, pp) = probe(h);
    let (lm, pm) = probe(-h);
    let same = |p: &Pattern| p.relu_signs == base.relu_signs && p.pool_args == base.pool_args;
    if !same(&pp) || !same(&pm) || base.relu_margin < 1e-6 || base.pool_margin < 1e-6 {
        return None;
    }
    Some((lp - lm) / (2.0 * h))
}

/// Relative error with a small absolute floor so that two gradients that are
/// both essentially zero compare equal.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// A node model whose scores are looked up by sample index, encoded as the
/// first pixel of a 1x1 image.
#[derive(Clone, Debug)]
pub struct TableStub {
    pub outputs: usize,
    pub table: Vec<Vec<f64>>,
}

impl ScoreModel for TableStub {
    fn output_neurons(&self) -> usize {
        self.outputs
    }
    fn native_size(&self) -> (usize, usize) {
        (1, 1)
    }
    fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.table[image.data()[0] as usize].clone())
    }
}

/// Every combination of per-node group choices, in mixed-radix order.
pub fn choice_grid(spec: &TreeSpec) -> Vec<Vec<usize>> {
    let arities: Vec<usize> = spec.nodes().iter().map(|n| n.arity()).collect();
    let mut grid = vec![vec![]];
    for &a in &arities {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                (0..a).map(move |g| {
                    let mut p = prefix.clone();
                    p.push(g);
                    p
                })
            })
            .collect();
    }
    grid
}

/// Scores whose lowest-index argmax is `group`. With `tie`, every later group
/// that is allowed to tie gets the same top score.
pub fn scores_for(arity: usize, group: usize, tie: bool, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let top = rng.random_range(0.5..1.0);
    (0..arity)
        .map(|j| {
            if j == group || (tie && j > group) {
                top
            } else {
                top - rng.random_range(0.01..0.5)
            }
        })
        .collect()
}

pub fn stub_tree(spec: &TreeSpec, combos: &[Vec<Vec<f64>>]) -> EnsembleTree<TableStub> {
    let models = spec
        .nodes()
        .iter()
        .map(|n| TableStub {
            outputs: n.arity(),
            table: combos.iter().map(|c| c[n.id].clone()).collect(),
        })
        .collect();
    EnsembleTree::new(spec.clone(), models).unwrap()
}

pub fn index_image(i: usize) -> Tensor {
    Tensor::new(vec![1, 1, 1], vec![i as f32]).unwrap()
}

/// Predicted class from per-node chosen groups, by checking every class's
/// root-to-leaf path rather than walking the tree.
pub fn enumerate_prediction(spec: &TreeSpec, choice: &dyn Fn(usize) -> usize) -> String {
    let hits: Vec<&String> = spec
        .classes()
        .iter()
        .filter(|c| {
            spec.path_to(c)
                .unwrap()
                .iter()
                .all(|&(node, group)| choice(node) == group)
        })
        .collect();
    assert_eq!(hits.len(), 1, "exactly one path must match");
    hits[0].clone()
}

/// Argmax with the lowest index winning ties.
pub fn first_argmax(s: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..s.len() {
        if s[i] > s[best] {
            best = i;
        }
    }
    best
}

/// A sample is correct iff every node on its true-class path, scored on its
/// own, picks the group containing the true class.
pub fn path_replay_correct<M: ScoreModel>(
    spec: &TreeSpec,
    models: &[M],
    image: &Tensor,
    class: &str,
) -> bool {
    spec.path_to(class).unwrap().iter().all(|&(node, group)| {
        let scores = models[node].scores(image).unwrap();
        first_argmax(&scores) == group
    })
}

/// Two classes of soft blobs at random positions, told apart by colour
/// alone: red-dominant versus blue-dominant. Separable after global pooling.
pub fn color_blobs(per_class: usize, size: usize, seed: u64) -> cnntree::data::LabeledDataset {
    use cnntree::data::{LabeledDataset, Sample};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for label in 0..2 {
        for i in 0..per_class {
            let (cy, cx) = (rng.random_range(0.25..0.75), rng.random_range(0.25..0.75));
            let r = rng.random_range(0.15..0.3) * size as f64;
            let mut data = Vec::with_capacity(size * size * 3);
            for y in 0..size {
                for x in 0..size {
                    let dy = y as f64 - cy * size as f64;
                    let dx = x as f64 - cx * size as f64;
                    let blob = (-(dx * dx + dy * dy) / (2.0 * r * r)).exp();
                    let (hot, cold) = (0.2 + 0.7 * blob, 0.2 + 0.1 * blob);
                    let px = if label == 0 { [hot, cold, cold] } else { [cold, cold, hot] };
                    for v in px {
                        data.push((v + rng.random_range(-0.05..0.05)) as f32);
                    }
                }
            }
            samples.push(Sample {
                id: format!("blob{label}/{i:04}"),
                image: Tensor::new(vec![size, size, 3], data).unwrap(),
                label,
            });
        }
    }
    LabeledDataset::new(vec!["red".into(), "blue".into()], samples).unwrap()
}

/// Output of one `cnntree` invocation.
pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cnntree(args: &[&str]) -> CliRun {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_cnntree"))
        .args(args)
        .output()
        .expect("binary runs");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// A run config small enough to train end to end in seconds. `extra` is
/// appended verbatim as top-level keys; `tree_kind` names the `[tree]` kind.
pub fn small_config(
    dir: &std::path::Path,
    classes: &[&str],
    tree_kind: &str,
    extra: &str,
) -> std::path::PathBuf {
    let classes: Vec<String> = classes.iter().map(|c| format!("{c:?}")).collect();
    let text = format!(
        r#"seed = 3
output_dir = {out:?}
classes = [{classes}]
backbone_filters = [4, 8]
input_size = [12, 12]
hidden_units = 8
pretrain_max_epochs = 3
candidate_sizes = [[12, 12], [16, 16]]
{extra}
[dataset]
kind = "synthetic"
per_class = 24
image_size = [12, 12]

[tree]
kind = "{tree_kind}"

[training]
max_epochs = 4
"#,
        out = dir.join("out").display().to_string(),
        classes = classes.join(", "),
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}
