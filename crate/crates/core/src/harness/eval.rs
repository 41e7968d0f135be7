use std::fmt::Write as _;

use super::config::RunConfig;
use super::data::physics_context;
use super::formats::CloudRecord;
use crate::error::{invalid, Result};
use crate::hand::Grasp;
use crate::physics::{diversity_score, success_eval};

/// Grasps to score against one cloud.
pub struct EvalItem<'a> {
    pub name: &'a str,
    pub cloud: &'a CloudRecord,
    pub grasps: &'a [Grasp],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectEval {
    pub name: String,
    pub label: String,
    pub total: usize,
    pub passed: usize,
    /// `None` with fewer than two grasps.
    pub diversity: Option<f64>,
    pub max_displacements: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub objects: Vec<ObjectEval>,
    pub total: usize,
    pub passed: usize,
    pub diversity: Option<f64>,
}

impl EvalReport {
    pub fn success_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# grasp evaluation").unwrap();
        writeln!(s, "# diversity: mean over joints of the population std, computed over all evaluated grasps").unwrap();
        writeln!(s, "grasps = {}", self.total).unwrap();
        writeln!(s, "passed = {}", self.passed).unwrap();
        writeln!(s, "success_rate = {:?}", self.success_rate()).unwrap();
        match self.diversity {
            Some(d) => writeln!(s, "diversity = {d:?}").unwrap(),
            None => writeln!(s, "diversity = n/a").unwrap(),
        }
        for o in &self.objects {
            let div = o.diversity.map(|d| format!("{d:?}")).unwrap_or_else(|| "n/a".into());
            writeln!(s, "object {} ({}): {}/{} passed, diversity {div}", o.name, o.label, o.passed, o.total).unwrap();
        }
        s
    }

    /// Tab-separated per-object table: name, grasps, success rate, diversity.
    pub fn to_table(&self) -> String {
        let mut s = String::from("object\tgrasps\tsuccess_rate\tdiversity\n");
        for o in &self.objects {
            let rate = if o.total == 0 { 0.0 } else { o.passed as f64 / o.total as f64 };
            let div = o.diversity.map(|d| format!("{d:?}")).unwrap_or_default();
            writeln!(s, "{}\t{}\t{rate:?}\t{div}", o.name, o.total).unwrap();
        }
        let div = self.diversity.map(|d| format!("{d:?}")).unwrap_or_default();
        writeln!(s, "all\t{}\t{:?}\t{div}", self.total, self.success_rate()).unwrap();
        s
    }
}

/// Runs the success test on every grasp and aggregates rate and diversity.
pub fn eval_cmd(config: &RunConfig, items: &[EvalItem]) -> Result<EvalReport> {
    let hand = config.hand()?;
    let criteria = config.criteria();
    let mut objects = Vec::with_capacity(items.len());
    let mut all = Vec::new();
    for item in items {
        if item.cloud.points.is_empty() {
            return Err(invalid(format!("object {} has an empty cloud", item.name)));
        }
        if let Some(g) = item.grasps.iter().find(|g| g.dof() != hand.dof()) {
            return Err(invalid(format!("object {}: grasp has {} joints, hand has {}", item.name, g.dof(), hand.dof())));
        }
        let ctx = physics_context(config, &hand, &item.cloud.points)?;
        let mut passed = 0;
        let mut disp = Vec::with_capacity(item.grasps.len());
        for g in item.grasps {
            let r = success_eval(g, &ctx, &criteria)?;
            passed += usize::from(r.passed);
            disp.push(r.max_displacement());
        }
        objects.push(ObjectEval {
            name: item.name.to_string(),
            label: item.cloud.label.clone(),
            total: item.grasps.len(),
            passed,
            diversity: if item.grasps.len() >= 2 { Some(diversity_score(item.grasps)?) } else { None },
            max_displacements: disp,
        });
        all.extend_from_slice(item.grasps);
    }
    Ok(EvalReport {
        total: all.len(),
        passed: objects.iter().map(|o| o.passed).sum(),
        diversity: if all.len() >= 2 { Some(diversity_score(&all)?) } else { None },
        objects,
    })
}

/// Two-sided 95% interval half-width for the difference of two success
/// proportions from `n1` and `n2` trials, using the pooled estimate.
pub fn proportion_interval(p1: f64, n1: usize, p2: f64, n2: usize) -> f64 {
    let pooled = (p1 * n1 as f64 + p2 * n2 as f64) / (n1 + n2) as f64;
    1.96 * (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt()
}
