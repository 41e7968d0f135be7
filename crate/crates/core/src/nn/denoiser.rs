//! The conditional noise predictor: object point tokens are embedded,
//! down-sampled and refined by self-attention blocks; each grasp is a token
//! that cross-attends to the object after every block.

use nalgebra::Vector3;
use rand::Rng;

use super::downsample::downsample;
use super::layers::{act_on_tensor, geometric_bilinear, LAYER_NORM_EPS};
use super::params::ParamStore;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::ga::tables::E0123;
use crate::ga::{embed_direction, embed_point, extract_point, Multivector, Versor};

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserConfig {
    pub blocks: usize,
    pub channels: usize,
    pub heads: usize,
    /// Width of the invariant scalar stream.
    pub aux_hidden: usize,
    pub joints: usize,
    pub time_features: usize,
    pub downsample_m: usize,
    pub knn_k: usize,
    pub symmetry_breaking: bool,
    /// Length unit (meters) used when embedding positions.
    pub pos_scale: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            blocks: 3,
            channels: 8,
            heads: 2,
            aux_hidden: 16,
            joints: 4,
            time_features: 16,
            downsample_m: 64,
            knn_k: 8,
            symmetry_breaking: true,
            pos_scale: 0.05,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.channels == 0 || self.aux_hidden == 0 {
            return Err(invalid("blocks, channels and aux_hidden must be at least 1"));
        }
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(invalid(format!("{} channels cannot be split into {} heads", self.channels, self.heads)));
        }
        if self.time_features == 0 || !self.time_features.is_multiple_of(2) {
            return Err(invalid("time_features must be a positive even number"));
        }
        if self.downsample_m == 0 || self.knn_k == 0 {
            return Err(invalid("downsample_m and knn_k must be at least 1"));
        }
        if !(self.pos_scale > 0.0) {
            return Err(invalid("pos_scale must be positive"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        9 + self.joints
    }
}

/// Object point tokens: channel 0 is the point, channel 1 the cloud
/// centroid; the aux column is the point's distance to the centroid. All
/// lengths are in units of `pos_scale`.
#[derive(Clone, Debug)]
pub struct ObjectTokens {
    pub mv: Tensor,
    pub aux: Tensor,
}

impl ObjectTokens {
    pub fn len(&self) -> usize {
        self.mv.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point locations read back from channel 0.
    pub fn positions(&self) -> Result<Vec<Vector3<f64>>> {
        self.mv
            .data()
            .chunks(32)
            .map(|tok| extract_point(&Multivector(tok[..16].try_into().expect("16 coefficients"))))
            .collect()
    }

    pub fn transformed(&self, u: &Versor) -> Self {
        Self { mv: act_on_tensor(u, &self.mv), aux: self.aux.clone() }
    }
}

/// Grasp tokens, one per sample. Multivector channels: the two raw rotation
/// columns as directions, the base point, the symmetry-breaking
/// pseudoscalar and the object centroid. Aux columns: joint coordinates
/// followed by the diffusion-step features.
#[derive(Clone, Debug)]
pub struct GraspTokens {
    pub mv: Tensor,
    pub aux: Tensor,
}

pub const GRASP_CHANNELS: usize = 5;
const SYMMETRY_CHANNEL: usize = 3;
const CENTROID_CHANNEL: usize = 4;

impl GraspTokens {
    pub fn len(&self) -> usize {
        self.mv.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies `u` to the geometric channels. The symmetry-breaking channel
    /// is a constant input and stays fixed.
    pub fn transformed(&self, u: &Versor) -> Self {
        let mut mv = act_on_tensor(u, &self.mv);
        for t in 0..self.len() {
            let s = (t * GRASP_CHANNELS + SYMMETRY_CHANNEL) * 16;
            mv.data_mut()[s..s + 16].copy_from_slice(&self.mv.data()[s..s + 16]);
        }
        Self { mv, aux: self.aux.clone() }
    }

    fn reference(&self) -> Tensor {
        let n = self.len();
        let mut data = Vec::with_capacity(n * 16);
        for t in 0..n {
            let s = (t * GRASP_CHANNELS + CENTROID_CHANNEL) * 16;
            data.extend_from_slice(&self.mv.data()[s..s + 16]);
        }
        Tensor::new(vec![n, 1, 16], data).expect("reference shape")
    }
}

/// Sinusoidal features of the diffusion step.
pub fn time_features(t: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut out = Vec::with_capacity(width);
    for i in 0..half {
        let freq = 1000f64.powf(-(i as f64) / half as f64);
        let a = t as f64 * freq;
        out.push(a.sin());
        out.push(a.cos());
    }
    out
}

/// Per-block object keys and values, computed once per object.
#[derive(Clone, Debug)]
pub struct EncodedObject {
    pub kv: Vec<(Tensor, Tensor)>,
}

/// Raw network outputs: directions `[B, 9]` and joint noise `[B, k]`.
pub struct ForwardVars {
    pub directions: Var,
    pub joints: Var,
}

#[derive(Clone, Debug)]
struct SelfBlock {
    q: usize,
    k: usize,
    v: usize,
    o: usize,
    mlp: Mlp,
    key: usize,
    value: usize,
}

#[derive(Clone, Debug)]
struct CrossBlock {
    q: usize,
    o: usize,
    aux_w: usize,
    aux_b: usize,
    inject: usize,
    mlp: Mlp,
}

#[derive(Clone, Debug)]
struct Mlp {
    l: usize,
    r: usize,
    z: usize,
    out: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    obj_stem: usize,
    obj_inject: usize,
    obj_blocks: Vec<SelfBlock>,
    aux_w: usize,
    aux_b: usize,
    grasp_stem: usize,
    grasp_inject: usize,
    grasp_blocks: Vec<CrossBlock>,
    readout: usize,
    joint_w: usize,
    joint_b: usize,
}

#[derive(Clone, Debug)]
pub struct Denoiser {
    config: DenoiserConfig,
    params: ParamStore,
    layout: Layout,
}

impl Denoiser {
    /// A network with randomly initialized weights.
    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let s = config.aux_hidden;
        let mut p = ParamStore::new();
        let el = |p: &mut ParamStore, name: String, co: usize, ci: usize, rng: &mut R| {
            p.push_normal(name, vec![co, ci, 9], 1.0 / (ci as f64).sqrt(), rng)
        };
        let mlp = |p: &mut ParamStore, pre: &str, rng: &mut R| Mlp {
            l: p.push_normal(format!("{pre}.mlp.left"), vec![c, c, 9], 1.0 / (c as f64).sqrt(), rng),
            r: p.push_normal(format!("{pre}.mlp.right"), vec![c, c, 9], 1.0 / (c as f64).sqrt(), rng),
            z: p.push_normal(format!("{pre}.mlp.ref"), vec![1, 1, 9], 1.0, rng),
            out: p.push_normal(format!("{pre}.mlp.out"), vec![c, 2 * c, 9], 1.0 / (2.0 * c as f64).sqrt(), rng),
        };
        let obj_stem = el(&mut p, "object.stem".into(), c, 2, rng);
        let obj_inject = p.push_normal("object.stem.inject", vec![c, 1], 1.0, rng);
        let mut obj_blocks = Vec::new();
        for b in 0..config.blocks {
            let pre = format!("object.block{b}");
            obj_blocks.push(SelfBlock {
                q: el(&mut p, format!("{pre}.attn.query"), c, c, rng),
                k: el(&mut p, format!("{pre}.attn.key"), c, c, rng),
                v: el(&mut p, format!("{pre}.attn.value"), c, c, rng),
                o: el(&mut p, format!("{pre}.attn.out"), c, c, rng),
                mlp: mlp(&mut p, &pre, rng),
                key: el(&mut p, format!("{pre}.cross.key"), c, c, rng),
                value: el(&mut p, format!("{pre}.cross.value"), c, c, rng),
            });
        }
        let aux_in = config.joints + config.time_features;
        let aux_w = p.push_normal("grasp.aux.weight", vec![s, aux_in], 1.0 / (aux_in as f64).sqrt(), rng);
        let aux_b = p.push("grasp.aux.bias", Tensor::zeros(vec![s]));
        let grasp_stem = el(&mut p, "grasp.stem".into(), c, GRASP_CHANNELS, rng);
        let grasp_inject = p.push_normal("grasp.stem.inject", vec![c, s], 1.0 / (s as f64).sqrt(), rng);
        let mut grasp_blocks = Vec::new();
        for b in 0..config.blocks {
            let pre = format!("grasp.block{b}");
            grasp_blocks.push(CrossBlock {
                q: el(&mut p, format!("{pre}.cross.query"), c, c, rng),
                o: el(&mut p, format!("{pre}.cross.out"), c, c, rng),
                aux_w: p.push_normal(format!("{pre}.aux.weight"), vec![s, s], 1.0 / (s as f64).sqrt(), rng),
                aux_b: p.push(format!("{pre}.aux.bias"), Tensor::zeros(vec![s])),
                inject: p.push_normal(format!("{pre}.inject"), vec![c, s], 1.0 / (s as f64).sqrt(), rng),
                mlp: mlp(&mut p, &pre, rng),
            });
        }
        let readout = el(&mut p, "grasp.readout".into(), 3, c, rng);
        let joint_w = p.push_normal("grasp.joints.weight", vec![config.joints, s], 1.0 / (s as f64).sqrt(), rng);
        let joint_b = p.push("grasp.joints.bias", Tensor::zeros(vec![config.joints]));
        let layout = Layout {
            obj_stem,
            obj_inject,
            obj_blocks,
            aux_w,
            aux_b,
            grasp_stem,
            grasp_inject,
            grasp_blocks,
            readout,
            joint_w,
            joint_b,
        };
        Ok(Self { config, params: p, layout })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Object tokens for a point cloud given in meters.
    pub fn object_tokens(&self, points: &[Vector3<f64>]) -> Result<ObjectTokens> {
        if points.is_empty() {
            return Err(invalid("empty point cloud"));
        }
        let s = self.config.pos_scale;
        let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let cm = embed_point(&(centroid / s));
        let mut mv = Vec::with_capacity(points.len() * 32);
        let mut aux = Vec::with_capacity(points.len());
        for p in points {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("object point".into()));
            }
            mv.extend_from_slice(&embed_point(&(p / s)).0);
            mv.extend_from_slice(&cm.0);
            aux.push((p - centroid).norm() / s);
        }
        Ok(ObjectTokens {
            mv: Tensor::new(vec![points.len(), 2, 16], mv)?,
            aux: Tensor::new(vec![points.len(), 1], aux)?,
        })
    }

    /// Grasp tokens for diffusion-space vectors `[a1, a2, p', q']` at step
    /// `t`, where `p'` is the base position relative to `centroid`, both in
    /// units of `pos_scale` (the centroid in meters).
    pub fn grasp_tokens(&self, centroid: &Vector3<f64>, xs: &[Vec<f64>], t: usize) -> Result<GraspTokens> {
        self.grasp_tokens_at(centroid, xs, &vec![t; xs.len()])
    }

    /// As [`Denoiser::grasp_tokens`] with one step per vector.
    pub fn grasp_tokens_at(&self, centroid: &Vector3<f64>, xs: &[Vec<f64>], ts: &[usize]) -> Result<GraspTokens> {
        if ts.len() != xs.len() {
            return Err(invalid(format!("{} grasp vectors but {} steps", xs.len(), ts.len())));
        }
        let d = self.config.output_dim();
        let c = centroid / self.config.pos_scale;
        let cm = embed_point(&c);
        let tw = self.config.time_features;
        let sb = if self.config.symmetry_breaking { 1.0 } else { 0.0 };
        let mut mv = Vec::with_capacity(xs.len() * GRASP_CHANNELS * 16);
        let mut aux = Vec::with_capacity(xs.len() * (self.config.joints + tw));
        for (x, &t) in xs.iter().zip(ts) {
            if x.len() != d {
                return Err(invalid(format!("grasp vector has {} entries, expected {d}", x.len())));
            }
            let a1 = Vector3::new(x[0], x[1], x[2]);
            let a2 = Vector3::new(x[3], x[4], x[5]);
            let p = c + Vector3::new(x[6], x[7], x[8]);
            mv.extend_from_slice(&embed_direction(&a1).0);
            mv.extend_from_slice(&embed_direction(&a2).0);
            mv.extend_from_slice(&embed_point(&p).0);
            mv.extend_from_slice(&Multivector::blade(E0123, sb).0);
            mv.extend_from_slice(&cm.0);
            aux.extend_from_slice(&x[9..]);
            aux.extend_from_slice(&time_features(t, tw));
        }
        Ok(GraspTokens {
            mv: Tensor::new(vec![xs.len(), GRASP_CHANNELS, 16], mv)?,
            aux: Tensor::new(vec![xs.len(), self.config.joints + tw], aux)?,
        })
    }

    fn mlp(&self, tape: &mut Tape, p: &[Var], m: &Mlp, h: Var) -> Result<Var> {
        let hn = tape.equi_layer_norm(h, LAYER_NORM_EPS)?;
        let l = tape.equi_linear(hn, p[m.l])?;
        let r = tape.equi_linear(hn, p[m.r])?;
        let mean = tape.mean_channels(hn)?;
        let z = tape.equi_linear(mean, p[m.z])?;
        let b = geometric_bilinear(tape, l, r, z)?;
        let g = tape.gated_gelu(b)?;
        let o = tape.equi_linear(g, p[m.out])?;
        tape.add(h, o)
    }

    /// Object encoder on a tape; returns per-block cross-attention keys and
    /// values.
    pub fn encode_on_tape(&self, tape: &mut Tape, p: &[Var], obj: &ObjectTokens) -> Result<Vec<(Var, Var)>> {
        if obj.is_empty() {
            return Err(invalid("empty point cloud"));
        }
        let l = &self.layout;
        let positions = obj.positions()?;
        let x = tape.constant(obj.mv.clone());
        let a = tape.constant(obj.aux.clone());
        let h = tape.equi_linear(x, p[l.obj_stem])?;
        let h = tape.scalar_inject(h, a, p[l.obj_inject])?;
        let h = tape.gated_gelu(h)?;
        let (mut h, _) = downsample(tape, h, &positions, self.config.downsample_m, self.config.knn_k)?;
        let mut kv = Vec::with_capacity(l.obj_blocks.len());
        for b in &l.obj_blocks {
            let hn = tape.equi_layer_norm(h, LAYER_NORM_EPS)?;
            let q = tape.equi_linear(hn, p[b.q])?;
            let k = tape.equi_linear(hn, p[b.k])?;
            let v = tape.equi_linear(hn, p[b.v])?;
            let att = tape.attention(q, k, v, self.config.heads)?;
            let o = tape.equi_linear(att, p[b.o])?;
            h = tape.add(h, o)?;
            h = self.mlp(tape, p, &b.mlp, h)?;
            let hn = tape.equi_layer_norm(h, LAYER_NORM_EPS)?;
            kv.push((tape.equi_linear(hn, p[b.key])?, tape.equi_linear(hn, p[b.value])?));
        }
        Ok(kv)
    }

    /// Grasp decoder on a tape given the object's keys and values.
    pub fn decode_on_tape(&self, tape: &mut Tape, p: &[Var], kv: &[(Var, Var)], grasps: &GraspTokens) -> Result<ForwardVars> {
        if grasps.is_empty() {
            return Err(invalid("no grasp tokens"));
        }
        let l = &self.layout;
        let g = tape.constant(grasps.mv.clone());
        let aux = tape.constant(grasps.aux.clone());
        let reference = tape.constant(grasps.reference());
        let ah = tape.dense(aux, p[l.aux_w], p[l.aux_b])?;
        let mut ah = tape.gelu(ah)?;
        let h = tape.equi_linear(g, p[l.grasp_stem])?;
        let mut h = tape.scalar_inject(h, ah, p[l.grasp_inject])?;
        for (b, &(k, v)) in l.grasp_blocks.iter().zip(kv) {
            let hn = tape.equi_layer_norm(h, LAYER_NORM_EPS)?;
            let q = tape.equi_linear(hn, p[b.q])?;
            let att = tape.attention(q, k, v, self.config.heads)?;
            let o = tape.equi_linear(att, p[b.o])?;
            h = tape.add(h, o)?;
            let d = tape.dense(ah, p[b.aux_w], p[b.aux_b])?;
            let d = tape.gelu(d)?;
            ah = tape.add(ah, d)?;
            h = tape.scalar_inject(h, ah, p[b.inject])?;
            h = self.mlp(tape, p, &b.mlp, h)?;
        }
        let hn = tape.equi_layer_norm(h, LAYER_NORM_EPS)?;
        let out = tape.equi_linear(hn, p[l.readout])?;
        let directions = tape.readout_directions(out, reference)?;
        let joints = tape.dense(ah, p[l.joint_w], p[l.joint_b])?;
        Ok(ForwardVars { directions, joints })
    }

    /// Encodes an object without recording gradients.
    pub fn encode(&self, obj: &ObjectTokens) -> Result<EncodedObject> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let kv = self.encode_on_tape(&mut tape, &p, obj)?;
        Ok(EncodedObject {
            kv: kv.into_iter().map(|(k, v)| (tape.value(k).clone(), tape.value(v).clone())).collect(),
        })
    }

    /// Noise predictions, one `9 + k` vector per grasp token.
    pub fn predict_encoded(&self, enc: &EncodedObject, grasps: &GraspTokens) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let kv: Vec<(Var, Var)> = enc.kv.iter().map(|(k, v)| (tape.constant(k.clone()), tape.constant(v.clone()))).collect();
        let out = self.decode_on_tape(&mut tape, &p, &kv, grasps)?;
        Ok(assemble(tape.value(out.directions), tape.value(out.joints)))
    }

    pub fn predict(&self, obj: &ObjectTokens, grasps: &GraspTokens) -> Result<Vec<Vec<f64>>> {
        self.predict_encoded(&self.encode(obj)?, grasps)
    }
}

/// Concatenates `[B, 9]` directions and `[B, k]` joints row by row.
pub fn assemble(directions: &Tensor, joints: &Tensor) -> Vec<Vec<f64>> {
    let (b, k) = (joints.dim(0), joints.dim(1));
    (0..b)
        .map(|i| {
            let mut row = directions.data()[i * 9..(i + 1) * 9].to_vec();
            row.extend_from_slice(&joints.data()[i * k..(i + 1) * k]);
            row
        })
        .collect()
}
