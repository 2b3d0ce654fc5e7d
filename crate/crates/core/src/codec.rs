//! Prediction-head mathematics: multimodal normalization, theta bin and
//! residual coding, orientation anchors, offset/width targets, decoding, and
//! the training loss with analytic gradients.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{region_to_camera_grasp, GraspPose, RegionGrasp, Vec3, OFFSET_LIMIT};
use crate::guidance::{RegionPatch, CH_R, CH_X, CH_Z};

pub const THETA_BINS: usize = 6;
pub const N_ANCHORS: usize = 7;
/// Candidate grasps per region, one per (beta, gamma) anchor pair.
pub const N_CANDIDATES: usize = N_ANCHORS * N_ANCHORS;

/// Orientation anchors and theta bins `(center, half_width)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorTable {
    pub beta_anchors: [f64; N_ANCHORS],
    pub gamma_anchors: [f64; N_ANCHORS],
    pub theta_bins: [(f64, f64); THETA_BINS],
}

impl Default for AnchorTable {
    fn default() -> Self {
        let a: [f64; N_ANCHORS] = std::array::from_fn(|i| -FRAC_PI_2 + (i as f64 + 0.5) * PI / N_ANCHORS as f64);
        let w = PI / THETA_BINS as f64;
        let bins = std::array::from_fn(|k| (-5.0 * PI / 12.0 + k as f64 * w, 0.5 * w));
        Self { beta_anchors: a, gamma_anchors: a, theta_bins: bins }
    }
}

impl AnchorTable {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("beta", &self.beta_anchors), ("gamma", &self.gamma_anchors)] {
            let inside = a.iter().all(|x| x.abs() <= FRAC_PI_2);
            if !inside || a.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("{name} anchors must increase strictly inside [-pi/2, pi/2]")));
            }
        }
        let mut edge = -FRAC_PI_2;
        for &(c, h) in &self.theta_bins {
            if !(h > 0.0) || ((c - h) - edge).abs() > 1e-12 {
                return Err(Error::Config("theta bins must partition [-pi/2, pi/2)".into()));
            }
            edge = c + h;
        }
        if (edge - FRAC_PI_2).abs() > 1e-12 {
            return Err(Error::Config("theta bins must end at pi/2".into()));
        }
        Ok(())
    }

    /// Bin containing `theta`; `pi/2` belongs to the last bin.
    pub fn theta_bin(&self, theta: f64) -> usize {
        self.theta_bins.iter().position(|&(c, h)| theta < c + h).unwrap_or(THETA_BINS - 1)
    }
}

/// Anchors within half the local anchor spacing of `x`; the nearest anchor
/// is always set.
fn anchor_labels(anchors: &[f64; N_ANCHORS], x: f64) -> [bool; N_ANCHORS] {
    let mut labels = [false; N_ANCHORS];
    for i in 0..N_ANCHORS {
        let d = x - anchors[i];
        let reach = if d >= 0.0 {
            if i + 1 < N_ANCHORS { 0.5 * (anchors[i + 1] - anchors[i]) } else { f64::INFINITY }
        } else if i > 0 {
            0.5 * (anchors[i] - anchors[i - 1])
        } else {
            f64::INFINITY
        };
        labels[i] = d.abs() <= reach;
    }
    let nearest = (0..N_ANCHORS)
        .min_by(|&a, &b| (x - anchors[a]).abs().total_cmp(&(x - anchors[b]).abs()))
        .expect("anchors");
    labels[nearest] = true;
    labels
}

/// Anchor table plus the scale constants of the regression targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codec {
    pub anchors: AnchorTable,
    pub max_width: f64,
}

impl Default for Codec {
    fn default() -> Self {
        Self { anchors: AnchorTable::default(), max_width: 0.085 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadTargets {
    pub theta_bin: usize,
    pub theta_residual: f64,
    pub beta_labels: [bool; N_ANCHORS],
    pub gamma_labels: [bool; N_ANCHORS],
    pub offset: [f64; 3],
    pub width_norm: f64,
}

/// Raw network outputs for one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadOutputs {
    pub theta_logits: [f64; THETA_BINS],
    pub theta_residuals: [f64; THETA_BINS],
    pub beta_logits: [f64; N_ANCHORS],
    pub gamma_logits: [f64; N_ANCHORS],
    pub offset_raw: [f64; 3],
    pub width_raw: f64,
}

/// Number of scalars in [`HeadOutputs`].
pub const N_OUTPUTS: usize = 2 * THETA_BINS + 2 * N_ANCHORS + 4;

impl HeadOutputs {
    pub fn zeros() -> Self {
        Self::from_flat(&[0.0; N_OUTPUTS]).expect("sized")
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(N_OUTPUTS);
        v.extend_from_slice(&self.theta_logits);
        v.extend_from_slice(&self.theta_residuals);
        v.extend_from_slice(&self.beta_logits);
        v.extend_from_slice(&self.gamma_logits);
        v.extend_from_slice(&self.offset_raw);
        v.push(self.width_raw);
        v
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() != N_OUTPUTS {
            return Err(Error::Format(format!("expected {N_OUTPUTS} head outputs, got {}", v.len())));
        }
        let t = THETA_BINS;
        let a = N_ANCHORS;
        Ok(Self {
            theta_logits: v[0..t].try_into().expect("sized"),
            theta_residuals: v[t..2 * t].try_into().expect("sized"),
            beta_logits: v[2 * t..2 * t + a].try_into().expect("sized"),
            gamma_logits: v[2 * t + a..2 * t + 2 * a].try_into().expect("sized"),
            offset_raw: v[2 * t + 2 * a..2 * t + 2 * a + 3].try_into().expect("sized"),
            width_raw: v[N_OUTPUTS - 1],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_flat().iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Format("non-finite head output".into()))
        }
    }
}

/// `num / scale`, nudged by a few ulps when that makes `scale * result`
/// reproduce `num` exactly.
fn exact_ratio(num: f64, scale: f64) -> f64 {
    let q = num / scale;
    if scale * q == num {
        return q;
    }
    let mut up = q;
    let mut down = q;
    for _ in 0..4 {
        up = up.next_up();
        down = down.next_down();
        if scale * up == num {
            return up;
        }
        if scale * down == num {
            return down;
        }
    }
    q
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..x.len() {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

impl Codec {
    pub fn encode(&self, g: &RegionGrasp) -> Result<HeadTargets> {
        g.validate()?;
        if g.width > self.max_width {
            return Err(Error::Range(format!("width {} exceeds {}", g.width, self.max_width)));
        }
        let bin = self.anchors.theta_bin(g.theta);
        let (c, h) = self.anchors.theta_bins[bin];
        let residual = exact_ratio(g.theta - c, h);
        Ok(HeadTargets {
            theta_bin: bin,
            theta_residual: residual,
            beta_labels: anchor_labels(&self.anchors.beta_anchors, g.beta),
            gamma_labels: anchor_labels(&self.anchors.gamma_anchors, g.gamma),
            offset: [0, 1, 2].map(|i| exact_ratio(g.dt[i], OFFSET_LIMIT)),
            width_norm: exact_ratio(g.width, self.max_width),
        })
    }

    /// Saturated outputs that a perfect predictor would emit for `t`.
    pub fn idealize(&self, t: &HeadTargets) -> HeadOutputs {
        let logit = |b: bool| if b { 10.0 } else { -10.0 };
        let mut out = HeadOutputs::zeros();
        out.theta_logits[t.theta_bin] = 10.0;
        for k in 0..THETA_BINS {
            if k != t.theta_bin {
                out.theta_logits[k] = -10.0;
            }
        }
        out.theta_residuals[t.theta_bin] = t.theta_residual;
        out.beta_logits = t.beta_labels.map(logit);
        out.gamma_logits = t.gamma_labels.map(logit);
        out.offset_raw = t.offset;
        out.width_raw = t.width_norm;
        out
    }

    /// Top-`k` region-frame grasps, best first; ties keep anchor order
    /// (beta-major).
    pub fn decode_region(&self, out: &HeadOutputs, top_k: usize) -> Result<Vec<RegionGrasp>> {
        out.validate()?;
        if top_k == 0 {
            return Err(Error::Range("top_k must be at least 1".into()));
        }
        let bin = argmax(&out.theta_logits);
        let (c, h) = self.anchors.theta_bins[bin];
        let theta = (c + h * out.theta_residuals[bin].clamp(-1.0, 1.0)).clamp(-FRAC_PI_2, FRAC_PI_2);
        let p_theta = softmax(&out.theta_logits)[bin];
        let dt = Vec3::from(out.offset_raw.map(|o| OFFSET_LIMIT * o.clamp(-1.0, 1.0)));
        let width = self.max_width * out.width_raw.clamp(0.0, 1.0);
        let mut cands: Vec<RegionGrasp> = Vec::with_capacity(N_CANDIDATES);
        for i in 0..N_ANCHORS {
            for j in 0..N_ANCHORS {
                let score = sigmoid(out.beta_logits[i]) * sigmoid(out.gamma_logits[j]) * p_theta;
                cands.push(RegionGrasp {
                    dt,
                    theta,
                    beta: self.anchors.beta_anchors[i],
                    gamma: self.anchors.gamma_anchors[j],
                    width,
                    score,
                });
            }
        }
        cands.sort_by(|a, b| b.score.total_cmp(&a.score));
        cands.truncate(top_k.min(N_CANDIDATES));
        Ok(cands)
    }

    pub fn decode(&self, out: &HeadOutputs, patch_center: &Vec3, top_k: usize) -> Result<Vec<GraspPose>> {
        Ok(self.decode_region(out, top_k)?.iter().map(|g| region_to_camera_grasp(g, patch_center)).collect())
    }
}

/// Focal loss parameters. `alpha = None` weights both classes by 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalLoss {
    pub alpha: Option<f64>,
    pub gamma: f64,
}

impl Default for FocalLoss {
    fn default() -> Self {
        Self { alpha: Some(0.25), gamma: 2.0 }
    }
}

impl FocalLoss {
    /// Loss and derivative with respect to the logit.
    pub fn eval(&self, logit: f64, positive: bool) -> (f64, f64) {
        let p = sigmoid(logit);
        let q = sigmoid(-logit);
        let log_p = -softplus(-logit);
        let log_q = -softplus(logit);
        let g = self.gamma;
        if positive {
            let a = self.alpha.unwrap_or(1.0);
            let w = q.powf(g);
            (-a * w * log_p, a * w * (g * p * log_p - q))
        } else {
            let a = self.alpha.map_or(1.0, |a| 1.0 - a);
            let w = p.powf(g);
            (-a * w * log_q, a * w * (p - g * q * log_q))
        }
    }
}

/// Binary cross-entropy on a logit.
pub fn binary_cross_entropy(logit: f64, positive: bool) -> f64 {
    if positive {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// Smooth-L1 with transition `beta`; returns value and derivative.
pub fn smooth_l1(d: f64, beta: f64) -> (f64, f64) {
    if d.abs() < beta {
        (0.5 * d * d / beta, d / beta)
    } else {
        (d.abs() - 0.5 * beta, d.signum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub angle_cls: f64,
    pub angle_reg: f64,
    pub orientation: f64,
    pub offset: f64,
    pub width: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { angle_cls: 1.0, angle_reg: 1.0, orientation: 1.0, offset: 1.0, width: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub focal: FocalLoss,
    pub smooth_l1_beta: f64,
    pub weights: LossWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { focal: FocalLoss::default(), smooth_l1_beta: 1.0, weights: LossWeights::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub angle_cls: f64,
    pub angle_reg: f64,
    pub orientation: f64,
    pub offset: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Loss {
    pub total: f64,
    pub terms: LossTerms,
    /// Gradient of `total` with respect to every output.
    pub grad: HeadOutputs,
}

pub fn loss_total(out: &HeadOutputs, t: &HeadTargets, cfg: &LossConfig) -> Loss {
    let w = cfg.weights;
    let mut grad = HeadOutputs::zeros();
    let mut terms = LossTerms::default();

    let sm = softmax(&out.theta_logits);
    let m = out.theta_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + out.theta_logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    terms.angle_cls = lse - out.theta_logits[t.theta_bin];
    for k in 0..THETA_BINS {
        let y = if k == t.theta_bin { 1.0 } else { 0.0 };
        grad.theta_logits[k] = w.angle_cls * (sm[k] - y);
    }

    let (l, d) = smooth_l1(out.theta_residuals[t.theta_bin] - t.theta_residual, cfg.smooth_l1_beta);
    terms.angle_reg = l;
    grad.theta_residuals[t.theta_bin] = w.angle_reg * d;

    for i in 0..N_ANCHORS {
        let (l, d) = cfg.focal.eval(out.beta_logits[i], t.beta_labels[i]);
        terms.orientation += l;
        grad.beta_logits[i] = w.orientation * d;
        let (l, d) = cfg.focal.eval(out.gamma_logits[i], t.gamma_labels[i]);
        terms.orientation += l;
        grad.gamma_logits[i] = w.orientation * d;
    }

    for i in 0..3 {
        let (l, d) = smooth_l1(out.offset_raw[i] - t.offset[i], cfg.smooth_l1_beta);
        terms.offset += l;
        grad.offset_raw[i] = w.offset * d;
    }

    let (l, d) = smooth_l1(out.width_raw - t.width_norm, cfg.smooth_l1_beta);
    terms.width = l;
    grad.width_raw = w.width * d;

    let total = w.angle_cls * terms.angle_cls
        + w.angle_reg * terms.angle_reg
        + w.orientation * terms.orientation
        + w.offset * terms.offset
        + w.width * terms.width;
    Loss { total, terms, grad }
}

/// Mean and population variance of one channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub var: f64,
}

/// Per-channel statistics grouped by modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityStats {
    pub rgb: [ChannelStats; 3],
    /// The Z channel.
    pub depth: [ChannelStats; 1],
    /// The X and Y channels.
    pub position: [ChannelStats; 2],
    /// Channels whose variance is zero; the epsilon guard applies to them.
    #[serde(default)]
    pub degenerate: Vec<String>,
}

/// Variance floor of the normalization.
pub const NORM_EPS: f64 = 1e-5;

/// Output channel order: `[R, G, B, Z, X, Y]`.
const OUTPUT_SOURCES: [usize; 6] = [CH_R, CH_R + 1, CH_R + 2, CH_Z, CH_X, CH_X + 1];
const CHANNEL_NAMES: [&str; 6] = ["r", "g", "b", "z", "x", "y"];

impl ModalityStats {
    /// Stats in output channel order.
    fn ordered(&self) -> [ChannelStats; 6] {
        [self.rgb[0], self.rgb[1], self.rgb[2], self.depth[0], self.position[0], self.position[1]]
    }

    pub fn validate(&self) -> Result<()> {
        if self.ordered().iter().all(|s| s.mean.is_finite() && s.var.is_finite() && s.var >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config("modality statistics must be finite with non-negative variance".into()))
        }
    }
}

/// Running statistics over the valid pixels of many patches.
pub fn compute_modality_stats<'a, I>(patches: I) -> Result<ModalityStats>
where
    I: IntoIterator<Item = &'a RegionPatch>,
{
    let mut n = 0u64;
    let mut mean = [0.0f64; 6];
    let mut m2 = [0.0f64; 6];
    for p in patches {
        let hw = p.size * p.size;
        for j in 0..hw {
            if !p.valid[j] {
                continue;
            }
            n += 1;
            for (c, &src) in OUTPUT_SOURCES.iter().enumerate() {
                let x = p.maps[src * hw + j] as f64;
                let d = x - mean[c];
                mean[c] += d / n as f64;
                m2[c] += d * (x - mean[c]);
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let s: [ChannelStats; 6] = std::array::from_fn(|c| ChannelStats { mean: mean[c], var: m2[c] / n as f64 });
    let degenerate = (0..6).filter(|&c| s[c].var == 0.0).map(|c| CHANNEL_NAMES[c].to_string()).collect();
    Ok(ModalityStats { rgb: [s[0], s[1], s[2]], depth: [s[3]], position: [s[4], s[5]], degenerate })
}

/// Per-modality 1x1 channel mixing applied after standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingWeights {
    pub rgb_w: [[f32; 3]; 3],
    pub rgb_b: [f32; 3],
    pub depth_w: f32,
    pub depth_b: f32,
    pub position_w: [[f32; 2]; 2],
    pub position_b: [f32; 2],
}

/// Number of float32 values in a mixing-weight file.
pub const MIXING_LEN: usize = 20;

impl Default for MixingWeights {
    fn default() -> Self {
        Self {
            rgb_w: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            rgb_b: [0.0; 3],
            depth_w: 1.0,
            depth_b: 0.0,
            position_w: [[1.0, 0.0], [0.0, 1.0]],
            position_b: [0.0; 2],
        }
    }
}

impl MixingWeights {
    fn flat(&self) -> [f32; MIXING_LEN] {
        let mut v = [0.0; MIXING_LEN];
        let mut k = 0;
        let mut put = |x: f32| {
            v[k] = x;
            k += 1;
        };
        self.rgb_w.iter().flatten().for_each(|&x| put(x));
        self.rgb_b.iter().for_each(|&x| put(x));
        put(self.depth_w);
        put(self.depth_b);
        self.position_w.iter().flatten().for_each(|&x| put(x));
        self.position_b.iter().for_each(|&x| put(x));
        v
    }

    /// Little-endian float32: rgb weights (row-major), rgb bias, depth weight,
    /// depth bias, position weights (row-major), position bias.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.flat().iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 4 * MIXING_LEN {
            return Err(Error::Format(format!("mixing weights need {} bytes, got {}", 4 * MIXING_LEN, bytes.len())));
        }
        let v: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite mixing weight".into()));
        }
        Ok(Self {
            rgb_w: [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]],
            rgb_b: [v[9], v[10], v[11]],
            depth_w: v[12],
            depth_b: v[13],
            position_w: [[v[14], v[15]], [v[16], v[17]]],
            position_b: [v[18], v[19]],
        })
    }
}

/// Standardized, mixed channels before rectification, `[R, G, B, Z, X, Y]`,
/// each `size x size`. Invalid pixels are zero.
pub fn standardize(patch: &RegionPatch, stats: &ModalityStats, mix: &MixingWeights) -> Result<Vec<f64>> {
    stats.validate()?;
    let hw = patch.size * patch.size;
    let s = stats.ordered();
    let mut out = vec![0.0; 6 * hw];
    for j in 0..hw {
        if !patch.valid[j] {
            continue;
        }
        let z: [f64; 6] = std::array::from_fn(|c| {
            let x = patch.maps[OUTPUT_SOURCES[c] * hw + j] as f64;
            (x - s[c].mean) / s[c].var.max(NORM_EPS).sqrt()
        });
        for r in 0..3 {
            out[r * hw + j] = (0..3).map(|c| mix.rgb_w[r][c] as f64 * z[c]).sum::<f64>() + mix.rgb_b[r] as f64;
        }
        out[3 * hw + j] = mix.depth_w as f64 * z[3] + mix.depth_b as f64;
        for r in 0..2 {
            out[(4 + r) * hw + j] = (0..2).map(|c| mix.position_w[r][c] as f64 * z[4 + c]).sum::<f64>() + mix.position_b[r] as f64;
        }
    }
    Ok(out)
}

/// Normalized, rectified input maps.
pub fn dedifferentiate(patch: &RegionPatch, stats: &ModalityStats, mix: &MixingWeights) -> Result<Vec<f64>> {
    Ok(standardize(patch, stats, mix)?.into_iter().map(|x| x.max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tables_are_valid() {
        let t = AnchorTable::default();
        t.validate().unwrap();
        assert!((t.beta_anchors[3]).abs() < 1e-15);
        assert_eq!(t.theta_bin(FRAC_PI_2), 5);
        assert_eq!(t.theta_bin(-FRAC_PI_2), 0);
    }

    #[test]
    fn theta_at_bin_center() {
        let c = Codec::default();
        let theta = c.anchors.theta_bins[2].0;
        let t = c.encode(&RegionGrasp { dt: Vec3::zeros(), theta, beta: 0.0, gamma: 0.0, width: 0.05, score: 1.0 }).unwrap();
        assert_eq!(t.theta_bin, 2);
        assert_eq!(t.theta_residual, 0.0);
    }

    #[test]
    fn beta_on_anchor_is_one_hot() {
        let c = Codec::default();
        let beta = c.anchors.beta_anchors[3];
        let t = c.encode(&RegionGrasp { dt: Vec3::zeros(), theta: 0.0, beta, gamma: 0.0, width: 0.05, score: 1.0 }).unwrap();
        assert_eq!(t.beta_labels, [false, false, false, true, false, false, false]);
    }

    #[test]
    fn offset_clamps() {
        let c = Codec::default();
        let mut out = HeadOutputs::zeros();
        out.offset_raw = [99.0, 0.0, 0.0];
        out.width_raw = 7.0;
        let g = c.decode_region(&out, 1).unwrap();
        assert_eq!(g[0].dt.x, 0.02);
        assert_eq!(g[0].width, 0.085);
    }

    #[test]
    fn equal_logits_keep_anchor_order() {
        let c = Codec::default();
        let g = c.decode_region(&HeadOutputs::zeros(), 100).unwrap();
        assert_eq!(g.len(), N_CANDIDATES);
        assert!(g.iter().all(|x| x.score == g[0].score));
        for (k, x) in g.iter().enumerate() {
            assert_eq!(x.beta, c.anchors.beta_anchors[k / N_ANCHORS]);
            assert_eq!(x.gamma, c.anchors.gamma_anchors[k % N_ANCHORS]);
        }
    }

    #[test]
    fn perfect_outputs_have_tiny_loss() {
        let c = Codec::default();
        let g = RegionGrasp { dt: Vec3::new(0.01, -0.004, 0.0), theta: 0.4, beta: 0.2, gamma: -0.7, width: 0.06, score: 1.0 };
        let t = c.encode(&g).unwrap();
        let l = loss_total(&c.idealize(&t), &t, &LossConfig::default());
        assert!(l.total >= 0.0 && l.total < 1e-3);
    }

    #[test]
    fn unit_focal_with_zero_exponent_is_bce() {
        let f = FocalLoss { alpha: None, gamma: 0.0 };
        for x in [-7.0, -0.3, 0.0, 0.9, 12.0] {
            for y in [true, false] {
                assert!((f.eval(x, y).0 - binary_cross_entropy(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixing_weights_roundtrip_and_shape_check() {
        let m = MixingWeights::default();
        assert_eq!(MixingWeights::from_bytes(&m.to_bytes()).unwrap(), m);
        assert!(MixingWeights::from_bytes(&[0u8; 12]).is_err());
    }
}
