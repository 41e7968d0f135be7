use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{GradientSource, GuidanceConfig, Schedule};
use crate::error::{Error, Result};
use crate::hand::{toy_hand, HandSpec};
use crate::nn::DenoiserConfig;
use crate::physics::{SimParams, SuccessCriteria};

/// Flat run configuration. Every key has a default and unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,

    pub k_fingers: usize,
    pub joints_per_finger: usize,

    pub spheres: usize,
    pub boxes: usize,
    pub test_spheres: usize,
    pub test_boxes: usize,
    pub points: usize,
    pub grasps_per_object: usize,
    pub ood_copy: bool,
    pub object_mass: f64,

    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,

    pub blocks: usize,
    pub channels: usize,
    pub heads: usize,
    pub aux_hidden: usize,
    pub time_features: usize,
    pub downsample_m: usize,
    pub knn_k: usize,
    pub symmetry_breaking: bool,
    pub pos_scale: f64,

    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub train_steps: usize,
    pub batch: usize,
    pub log_every: usize,

    pub guidance_scale: f64,
    /// First and last guided step; 0 for either means the schedule end.
    pub guidance_from: usize,
    pub guidance_to: usize,
    /// 0 disables the per-step cap.
    pub guidance_max_shift: f64,
    /// Evaluate the physics loss at the predicted clean grasp.
    pub guidance_at_prediction: bool,
    pub guidance_finite_difference: bool,
    /// Central-difference step for the stability gradient.
    pub guidance_fd_step: f64,

    pub dt: f64,
    pub sim_steps: usize,
    pub k_n: f64,
    pub c_n: f64,
    pub c_t: f64,
    pub mu: f64,
    pub point_radius: f64,
    pub gravity: bool,
    pub probe_speed: f64,

    pub eval_accel: f64,
    pub eval_steps: usize,
    pub eval_threshold: f64,
    pub eval_mu: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let den = DenoiserConfig::default();
        let sim = SimParams::default();
        let crit = SuccessCriteria::default();
        Self {
            seed: 0,
            output_dir: PathBuf::from("run"),
            k_fingers: 2,
            joints_per_finger: 2,
            spheres: 4,
            boxes: 4,
            test_spheres: 2,
            test_boxes: 2,
            points: 256,
            grasps_per_object: 25,
            ood_copy: true,
            object_mass: 0.1,
            diffusion_steps: 100,
            beta_start: 1e-3,
            beta_end: 0.2,
            blocks: den.blocks,
            channels: den.channels,
            heads: den.heads,
            aux_hidden: den.aux_hidden,
            time_features: den.time_features,
            downsample_m: den.downsample_m,
            knn_k: den.knn_k,
            symmetry_breaking: den.symmetry_breaking,
            pos_scale: den.pos_scale,
            learning_rate: 3e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            train_steps: 2000,
            batch: 16,
            log_every: 100,
            guidance_scale: 0.0,
            guidance_from: 1,
            guidance_to: 3,
            guidance_max_shift: 0.002,
            guidance_at_prediction: true,
            guidance_finite_difference: false,
            guidance_fd_step: 1e-4,
            dt: sim.dt,
            sim_steps: sim.steps,
            k_n: sim.k_n,
            c_n: sim.c_n,
            c_t: sim.c_t,
            mu: sim.mu,
            point_radius: sim.point_radius,
            gravity: sim.gravity,
            probe_speed: 0.1,
            eval_accel: crit.accel,
            eval_steps: crit.steps,
            eval_threshold: crit.threshold,
            eval_mu: crit.mu,
        }
    }
}

/// Keys that must agree between a checkpoint and the config used to load it.
pub const MODEL_KEYS: &[&str] = &[
    "k_fingers",
    "joints_per_finger",
    "diffusion_steps",
    "beta_start",
    "beta_end",
    "blocks",
    "channels",
    "heads",
    "aux_hidden",
    "time_features",
    "downsample_m",
    "knn_k",
    "symmetry_breaking",
    "pos_scale",
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The config as a flat key/value table.
    pub fn table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config is a table")
    }

    /// Overrides individual keys; values are parsed as TOML literals and
    /// fall back to strings.
    pub fn with_overrides<'a>(&self, overrides: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut table = self.table();
        for (k, v) in overrides {
            if !table.contains_key(k) {
                return Err(Error::Format(format!("unknown config key `{k}`")));
            }
            let value = format!("v = {v}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(v.to_string()));
            table.insert(k.to_string(), value);
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Format(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.hand()?;
        self.denoiser()?.validate()?;
        self.schedule()?;
        self.sim_params().validate()?;
        self.guidance().validate()?;
        let bad = |m: &str| Err(crate::error::invalid(m.to_string()));
        if self.points < 4 {
            return bad("points must be at least 4");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be non-negative");
        }
        if !(self.object_mass > 0.0) {
            return bad("object_mass must be positive");
        }
        Ok(())
    }

    pub fn hand(&self) -> Result<HandSpec> {
        toy_hand(self.k_fingers, self.joints_per_finger)
    }

    pub fn joints(&self) -> usize {
        self.k_fingers * self.joints_per_finger
    }

    pub fn denoiser(&self) -> Result<DenoiserConfig> {
        let c = DenoiserConfig {
            blocks: self.blocks,
            channels: self.channels,
            heads: self.heads,
            aux_hidden: self.aux_hidden,
            joints: self.joints(),
            time_features: self.time_features,
            downsample_m: self.downsample_m,
            knn_k: self.knn_k,
            symmetry_breaking: self.symmetry_breaking,
            pos_scale: self.pos_scale,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::linear(self.diffusion_steps, self.beta_start, self.beta_end)
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            dt: self.dt,
            steps: self.sim_steps,
            k_n: self.k_n,
            c_n: self.c_n,
            c_t: self.c_t,
            mu: self.mu,
            point_radius: self.point_radius,
            gravity: self.gravity,
        }
    }

    pub fn criteria(&self) -> SuccessCriteria {
        SuccessCriteria { accel: self.eval_accel, steps: self.eval_steps, threshold: self.eval_threshold, mu: self.eval_mu }
    }

    pub fn guidance(&self) -> GuidanceConfig {
        let t = self.diffusion_steps;
        let lo = if self.guidance_from == 0 { 1 } else { self.guidance_from };
        let hi = if self.guidance_to == 0 { t } else { self.guidance_to };
        GuidanceConfig {
            scale: self.guidance_scale,
            source: if self.guidance_finite_difference { GradientSource::FiniteDifference } else { GradientSource::Mixed },
            steps: if lo == 1 && hi >= t { None } else { Some((lo, hi)) },
            max_shift: if self.guidance_max_shift > 0.0 { Some(self.guidance_max_shift) } else { None },
            at_prediction: self.guidance_at_prediction,
        }
    }

    /// Model-defining keys and their values, as stored in checkpoints.
    pub fn model_entries(&self) -> Vec<(String, String)> {
        let table = self.table();
        MODEL_KEYS.iter().map(|k| (k.to_string(), table[*k].to_string())).collect()
    }

    /// Keys whose values differ from a checkpoint's stored entries.
    pub fn mismatches(&self, stored: &[(String, String)]) -> Vec<String> {
        let ours = self.model_entries();
        let mut out = Vec::new();
        for (k, v) in &ours {
            match stored.iter().find(|(sk, _)| sk == k) {
                Some((_, sv)) if sv == v => {}
                Some((_, sv)) => out.push(format!("{k}: checkpoint {sv}, config {v}")),
                None => out.push(format!("{k}: missing from checkpoint")),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("chanels = 4").unwrap_err();
        assert!(err.to_string().contains("chanels"));
        assert!(RunConfig::default().with_overrides([("chanels", "4")]).is_err());
    }

    #[test]
    fn overrides_parse_literals() {
        let c = RunConfig::default()
            .with_overrides([("channels", "4"), ("symmetry_breaking", "false"), ("output_dir", "out/a"), ("beta_end", "0.1")])
            .unwrap();
        assert_eq!(c.channels, 4);
        assert!(!c.symmetry_breaking);
        assert_eq!(c.output_dir, PathBuf::from("out/a"));
        assert_eq!(c.beta_end, 0.1);
        assert!(RunConfig::default().with_overrides([("channels", "many")]).is_err());
    }

    #[test]
    fn mismatch_lists_keys() {
        let a = RunConfig::default();
        let b = RunConfig { channels: 4, heads: 4, ..a.clone() };
        let diff = b.mismatches(&a.model_entries());
        assert_eq!(diff.len(), 2);
        assert!(diff[0].starts_with("channels") && diff[1].starts_with("heads"));
        assert!(a.mismatches(&a.model_entries()).is_empty());
    }

    #[test]
    fn guidance_range_zero_means_schedule_end() {
        let c = RunConfig { guidance_scale: 0.5, ..Default::default() };
        assert_eq!(c.guidance().steps, Some((1, 3)));
        let c = RunConfig { guidance_from: 0, guidance_to: 0, ..c };
        assert_eq!(c.guidance().steps, None);
        let c = RunConfig { guidance_from: 1, guidance_to: 20, ..c };
        assert_eq!(c.guidance().steps, Some((1, 20)));
    }
}
