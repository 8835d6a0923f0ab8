//! Actor-critic network: three same-padded convolutions, three hidden
//! fully-connected layers, a 6-way action head and a scalar value head that
//! branches off the last hidden layer. LeakyReLU everywhere except the heads.
//!
//! Parameters live in one flat `Vec<f64>` so the optimizer, checkpoints and
//! finite-difference checks can treat them uniformly. Gradients are computed
//! by hand (im2col convolutions).

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::obs::{Observation, CHANNELS};
use crate::rng::{self, tag};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub conv_channels: usize,
    pub conv_kernels: Vec<usize>,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub actions: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            height: 5,
            width: 7,
            in_channels: CHANNELS,
            conv_channels: 25,
            conv_kernels: vec![5, 3, 3],
            hidden: 64,
            hidden_layers: 3,
            actions: 6,
        }
    }
}

impl NetConfig {
    /// Narrower trunk for desk-scale runs on a single CPU core.
    pub fn desk() -> Self {
        NetConfig {
            conv_channels: 8,
            hidden: 32,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.height,
            self.width,
            self.in_channels,
            self.conv_channels,
            self.hidden,
            self.hidden_layers,
            self.actions,
        ];
        if positive.contains(&0) || self.conv_kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::InvalidConfig(format!(
                "network dimensions must be positive with odd kernels: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Plan::new(self).len
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    cin: usize,
    cout: usize,
    k: usize,
    w: usize,
    b: usize,
}

impl Conv {
    fn cols(&self) -> usize {
        self.cin * self.k * self.k
    }
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    nin: usize,
    nout: usize,
    w: usize,
    b: usize,
}

#[derive(Clone, Debug)]
struct Plan {
    convs: Vec<Conv>,
    hidden: Vec<Dense>,
    policy: Dense,
    value: Dense,
    len: usize,
}

impl Plan {
    fn new(cfg: &NetConfig) -> Self {
        let mut off = 0;
        let mut alloc = |n: usize| {
            let at = off;
            off += n;
            at
        };
        let mut convs = Vec::new();
        let mut cin = cfg.in_channels;
        for &k in &cfg.conv_kernels {
            let cout = cfg.conv_channels;
            let w = alloc(cout * cin * k * k);
            let b = alloc(cout);
            convs.push(Conv { cin, cout, k, w, b });
            cin = cout;
        }
        let mut dense = |nin: usize, nout: usize| {
            let w = alloc(nin * nout);
            let b = alloc(nout);
            Dense { nin, nout, w, b }
        };
        let mut nin = cin * cfg.height * cfg.width;
        let mut hidden = Vec::new();
        for _ in 0..cfg.hidden_layers {
            hidden.push(dense(nin, cfg.hidden));
            nin = cfg.hidden;
        }
        let policy = dense(nin, cfg.actions);
        let value = dense(nin, 1);
        Plan {
            convs,
            hidden,
            policy,
            value,
            len: off,
        }
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Cache {
    patches: Vec<Vec<f64>>,
    conv_pre: Vec<Vec<f64>>,
    dense_in: Vec<Vec<f64>>,
    dense_pre: Vec<Vec<f64>>,
    head_in: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetOutput {
    pub logits: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct PolicyNet {
    config: NetConfig,
    plan: Plan,
    params: Vec<f64>,
}

impl PolicyNet {
    /// Fan-in scaled uniform initialisation. The action head is scaled down
    /// so the initial policy is close to uniform.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let plan = Plan::new(&config);
        let mut params = vec![0.0; plan.len];
        let mut rng = rng::stream(seed, &[tag::INIT]);
        let mut fill = |w: usize, n: usize, fan_in: usize, gain: f64| {
            let bound = gain * (6.0 / fan_in as f64).sqrt();
            for p in &mut params[w..w + n] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        for c in &plan.convs {
            fill(c.w, c.cout * c.cols(), c.cols(), 1.0);
        }
        for d in &plan.hidden {
            fill(d.w, d.nin * d.nout, d.nin, 1.0);
        }
        fill(
            plan.policy.w,
            plan.policy.nin * plan.policy.nout,
            plan.policy.nin,
            0.01,
        );
        fill(plan.value.w, plan.value.nin, plan.value.nin, 0.5);
        Ok(PolicyNet {
            config,
            plan,
            params,
        })
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let plan = Plan::new(&config);
        if params.len() != plan.len {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", plan.len),
                actual: format!("{} parameters", params.len()),
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(PolicyNet {
            config,
            plan,
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_len(&self) -> usize {
        self.config.in_channels * self.config.height * self.config.width
    }

    /// Zeroes the action head so every action gets logit 0.
    pub fn zero_policy_head(&mut self) {
        let d = self.plan.policy;
        self.params[d.w..d.b + d.nout]
            .iter_mut()
            .for_each(|p| *p = 0.0);
    }

    /// Hex SHA-256 of the parameter bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        h.finalize()[..16]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn check_observation(&self, obs: &Observation) -> Result<()> {
        let c = &self.config;
        if (obs.height, obs.width, obs.channels) != (c.height, c.width, c.in_channels) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{}", c.height, c.width, c.in_channels),
                actual: format!("{}x{}x{}", obs.height, obs.width, obs.channels),
            });
        }
        Ok(())
    }

    pub fn forward(&self, obs: &Observation) -> Result<NetOutput> {
        self.check_observation(obs)?;
        let mut cache = Cache::default();
        self.forward_cached(&obs.data, &mut cache);
        Ok(NetOutput {
            logits: cache.logits,
            value: cache.value,
        })
    }

    /// Forward pass on a flat channel-major input, filling `cache`.
    pub fn forward_cached(&self, input: &[f64], cache: &mut Cache) {
        debug_assert_eq!(input.len(), self.input_len());
        let (h, w) = (self.config.height, self.config.width);
        let hw = h * w;
        let p = &self.params;
        let n_conv = self.plan.convs.len();
        cache.patches.resize(n_conv, Vec::new());
        cache.conv_pre.resize(n_conv, Vec::new());

        let mut x: Vec<f64> = input.to_vec();
        for (l, conv) in self.plan.convs.iter().enumerate() {
            let cols = conv.cols();
            let patches = &mut cache.patches[l];
            im2col(&x, conv.cin, h, w, conv.k, patches);
            let pre = &mut cache.conv_pre[l];
            pre.clear();
            pre.resize(conv.cout * hw, 0.0);
            for oc in 0..conv.cout {
                let wrow = &p[conv.w + oc * cols..conv.w + (oc + 1) * cols];
                let bias = p[conv.b + oc];
                for (pix, patch) in patches.chunks_exact(cols).enumerate() {
                    pre[oc * hw + pix] = bias + dot(wrow, patch);
                }
            }
            x.clear();
            x.extend(pre.iter().map(|&z| leaky(z)));
        }

        let n_dense = self.plan.hidden.len();
        cache.dense_in.resize(n_dense, Vec::new());
        cache.dense_pre.resize(n_dense, Vec::new());
        for (l, d) in self.plan.hidden.iter().enumerate() {
            cache.dense_in[l].clone_from(&x);
            let pre = &mut cache.dense_pre[l];
            dense_forward(p, d, &x, pre);
            x.clear();
            x.extend(pre.iter().map(|&z| leaky(z)));
        }
        dense_forward(p, &self.plan.policy, &x, &mut cache.logits);
        let mut v = Vec::with_capacity(1);
        dense_forward(p, &self.plan.value, &x, &mut v);
        cache.value = v[0];
        cache.head_in = x;
    }

    /// Accumulates parameter gradients for the loss whose derivatives with
    /// respect to the logits and value are `dlogits` and `dvalue`.
    pub fn backward(&self, cache: &Cache, dlogits: &[f64], dvalue: f64, grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let p = &self.params;
        let (h, w) = (self.config.height, self.config.width);
        let hw = h * w;

        let mut dx = vec![0.0; cache.head_in.len()];
        dense_backward(
            p,
            &self.plan.policy,
            &cache.head_in,
            dlogits,
            grads,
            Some(&mut dx),
        );
        dense_backward(
            p,
            &self.plan.value,
            &cache.head_in,
            &[dvalue],
            grads,
            Some(&mut dx),
        );

        for (l, d) in self.plan.hidden.iter().enumerate().rev() {
            let dz: Vec<f64> = dx
                .iter()
                .zip(&cache.dense_pre[l])
                .map(|(g, &z)| g * leaky_grad(z))
                .collect();
            let mut dprev = vec![0.0; d.nin];
            dense_backward(p, d, &cache.dense_in[l], &dz, grads, Some(&mut dprev));
            dx = dprev;
        }

        for (l, conv) in self.plan.convs.iter().enumerate().rev() {
            let cols = conv.cols();
            let dz: Vec<f64> = dx
                .iter()
                .zip(&cache.conv_pre[l])
                .map(|(g, &z)| g * leaky_grad(z))
                .collect();
            let patches = &cache.patches[l];
            for oc in 0..conv.cout {
                let gw = conv.w + oc * cols;
                let dz_row = &dz[oc * hw..(oc + 1) * hw];
                let mut gb = 0.0;
                for (pix, patch) in patches.chunks_exact(cols).enumerate() {
                    let g = dz_row[pix];
                    if g != 0.0 {
                        axpy(g, patch, &mut grads[gw..gw + cols]);
                        gb += g;
                    }
                }
                grads[conv.b + oc] += gb;
            }
            if l == 0 {
                break;
            }
            let mut dpatch = vec![0.0; hw * cols];
            for oc in 0..conv.cout {
                let wrow = &p[conv.w + oc * cols..conv.w + (oc + 1) * cols];
                for pix in 0..hw {
                    let g = dz[oc * hw + pix];
                    if g != 0.0 {
                        axpy(g, wrow, &mut dpatch[pix * cols..(pix + 1) * cols]);
                    }
                }
            }
            dx = col2im(&dpatch, conv.cin, h, w, conv.k);
        }
    }
}

fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise without reassociation.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn dense_forward(p: &[f64], d: &Dense, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(
        (0..d.nout).map(|o| p[d.b + o] + dot(&p[d.w + o * d.nin..d.w + (o + 1) * d.nin], x)),
    );
}

fn dense_backward(
    p: &[f64],
    d: &Dense,
    x: &[f64],
    dz: &[f64],
    grads: &mut [f64],
    dx: Option<&mut Vec<f64>>,
) {
    for (o, &g) in dz.iter().enumerate() {
        grads[d.b + o] += g;
        axpy(g, x, &mut grads[d.w + o * d.nin..d.w + (o + 1) * d.nin]);
    }
    if let Some(dx) = dx {
        for (o, &g) in dz.iter().enumerate() {
            axpy(g, &p[d.w + o * d.nin..d.w + (o + 1) * d.nin], dx);
        }
    }
}

/// `out[pixel][c * k * k + ky * k + kx]`, zero padded so output size equals
/// input size.
fn im2col(x: &[f64], cin: usize, h: usize, w: usize, k: usize, out: &mut Vec<f64>) {
    let pad = (k / 2) as isize;
    let cols = cin * k * k;
    out.clear();
    out.resize(h * w * cols, 0.0);
    for y in 0..h {
        for xx in 0..w {
            let row = &mut out[(y * w + xx) * cols..(y * w + xx + 1) * cols];
            for c in 0..cin {
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = xx as isize + kx as isize - pad;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        row[c * k * k + ky * k + kx] = x[(c * h + sy as usize) * w + sx as usize];
                    }
                }
            }
        }
    }
}

fn col2im(dpatch: &[f64], cin: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let cols = cin * k * k;
    let mut dx = vec![0.0; cin * h * w];
    for y in 0..h {
        for xx in 0..w {
            let row = &dpatch[(y * w + xx) * cols..(y * w + xx + 1) * cols];
            for c in 0..cin {
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = xx as isize + kx as isize - pad;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        dx[(c * h + sy as usize) * w + sx as usize] += row[c * k * k + ky * k + kx];
                    }
                }
            }
        }
    }
    dx
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}
