//! Balanced same-view / view-switch metrics, agreement filtering and significance.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ViewKind;
use crate::error::{Error, Result};
use crate::model::Prediction;

/// Rank AUC with midranks: tied positive/negative pairs count one half.
pub fn auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::LengthMismatch(scores.len(), positives.len()));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateSubset("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if positives[k] {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Average precision over a descending-score sweep. Tied scores keep their input order.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::LengthMismatch(scores.len(), positives.len()));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &k) in idx.iter().enumerate() {
        if positives[k] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// Mean per-class recall; classes absent from `targets` are skipped.
pub fn class_balanced_accuracy(preds: &[ViewKind], targets: &[ViewKind]) -> f64 {
    crate::train::balanced_accuracy_of(preds, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// Mean of the AP with ego as positive and the AP with exo as positive.
    #[default]
    Macro,
    EgoPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub n: usize,
    pub n_ego: usize,
    pub n_exo: usize,
    /// Class-balanced accuracy.
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedMetrics {
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub n: usize,
    pub balanced_accuracy: Option<f64>,
    pub balanced_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub test_name: String,
    pub reference: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_instances: usize,
    pub same_view: Option<SubsetMetrics>,
    pub view_switch: Option<SubsetMetrics>,
    /// Means over the two subsets; absent unless both subsets are present.
    pub balanced: Option<BalancedMetrics>,
    pub by_scenario: Vec<ScenarioRow>,
    pub significance: Option<Significance>,
}

/// What the evaluator needs to know about each instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInstance {
    pub target: ViewKind,
    pub is_switch: bool,
    pub scenario: Option<String>,
}

impl EvalInstance {
    pub fn of(sample: &crate::data::Sample) -> Self {
        Self {
            target: sample.target.kind,
            is_switch: sample.is_switch(),
            scenario: sample.scenario.clone(),
        }
    }
}

fn subset_metrics(preds: &[&Prediction], targets: &[ViewKind], ap_mode: ApMode) -> SubsetMetrics {
    let kinds: Vec<ViewKind> = preds.iter().map(|p| p.kind()).collect();
    let ego: Vec<bool> = targets.iter().map(|&t| t == ViewKind::Ego).collect();
    let exo: Vec<bool> = ego.iter().map(|e| !e).collect();
    let s_ego: Vec<f64> = preds.iter().map(|p| p.probs[0]).collect();
    let s_exo: Vec<f64> = preds.iter().map(|p| p.probs[1]).collect();
    let n_ego = ego.iter().filter(|&&e| e).count();
    let ap = match ap_mode {
        ApMode::EgoPositive => average_precision(&s_ego, &ego).ok(),
        ApMode::Macro => match (average_precision(&s_ego, &ego), average_precision(&s_exo, &exo)) {
            (Ok(a), Ok(b)) => Some(0.5 * (a + b)),
            _ => None,
        },
    };
    SubsetMetrics {
        n: preds.len(),
        n_ego,
        n_exo: preds.len() - n_ego,
        accuracy: class_balanced_accuracy(&kinds, targets),
        auc: auc(&s_ego, &ego).ok(),
        ap,
    }
}

fn mean2(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(0.5 * (a? + b?))
}

fn split_report(preds: &[Prediction], inst: &[EvalInstance], ap_mode: ApMode) -> (Option<SubsetMetrics>, Option<SubsetMetrics>) {
    let part = |switch: bool| {
        let (p, t): (Vec<&Prediction>, Vec<ViewKind>) = preds
            .iter()
            .zip(inst)
            .filter(|(_, i)| i.is_switch == switch)
            .map(|(p, i)| (p, i.target))
            .unzip();
        (!p.is_empty()).then(|| subset_metrics(&p, &t, ap_mode))
    };
    (part(false), part(true))
}

fn balanced_of(same: &Option<SubsetMetrics>, switch: &Option<SubsetMetrics>) -> Option<BalancedMetrics> {
    let (a, b) = (same.as_ref()?, switch.as_ref()?);
    Some(BalancedMetrics {
        accuracy: 0.5 * (a.accuracy + b.accuracy),
        auc: mean2(a.auc, b.auc),
        ap: mean2(a.ap, b.ap),
    })
}

/// Split by same-view / view-switch, score each subset, and average.
pub fn balanced_report(preds: &[Prediction], inst: &[EvalInstance], ap_mode: ApMode) -> Result<EvalReport> {
    if preds.len() != inst.len() {
        return Err(Error::LengthMismatch(preds.len(), inst.len()));
    }
    let (same_view, view_switch) = split_report(preds, inst, ap_mode);
    let balanced = balanced_of(&same_view, &view_switch);

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, x) in inst.iter().enumerate() {
        if let Some(s) = &x.scenario {
            groups.entry(s.as_str()).or_default().push(i);
        }
    }
    let by_scenario = groups
        .into_iter()
        .map(|(name, idx)| {
            let p: Vec<Prediction> = idx.iter().map(|&i| preds[i]).collect();
            let x: Vec<EvalInstance> = idx.iter().map(|&i| inst[i].clone()).collect();
            let (a, b) = split_report(&p, &x, ap_mode);
            let bal = balanced_of(&a, &b);
            ScenarioRow {
                scenario: name.to_string(),
                n: idx.len(),
                balanced_accuracy: bal.as_ref().map(|m| m.accuracy),
                balanced_ap: bal.and_then(|m| m.ap),
            }
        })
        .collect();

    Ok(EvalReport {
        n_instances: preds.len(),
        same_view,
        view_switch,
        balanced,
        by_scenario,
        significance: None,
    })
}

/// Balanced accuracy of hard predictions: mean over present subsets of class-balanced accuracy.
pub fn balanced_accuracy(preds: &[ViewKind], inst: &[EvalInstance]) -> f64 {
    let mut parts = Vec::new();
    for switch in [false, true] {
        let (p, t): (Vec<ViewKind>, Vec<ViewKind>) = preds
            .iter()
            .zip(inst)
            .filter(|(_, i)| i.is_switch == switch)
            .map(|(p, i)| (*p, i.target))
            .unzip();
        if !p.is_empty() {
            parts.push(class_balanced_accuracy(&p, &t));
        }
    }
    parts.iter().sum::<f64>() / parts.len().max(1) as f64
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Per-scenario rows as CSV.
    pub fn scenario_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut out = String::from("scenario,n,balanced_accuracy,balanced_ap\n");
        for r in &self.by_scenario {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.scenario,
                r.n,
                f(r.balanced_accuracy),
                f(r.balanced_ap)
            ));
        }
        out
    }
}

/// Two-rater Cohen's kappa.
pub fn cohen_kappa(a: &[ViewKind], b: &[ViewKind]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::KappaUndefined);
    }
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let frac = |v: &[ViewKind]| v.iter().filter(|&&k| k == ViewKind::Ego).count() as f64 / n;
    let (pa, pb) = (frac(a), frac(b));
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (1.0 - pe).abs() < 1e-12 {
        return Err(Error::KappaUndefined);
    }
    Ok((po - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationInstance {
    pub instance_id: String,
    pub votes: Vec<ViewKind>,
    #[serde(default)]
    pub accepted_label: Option<ViewKind>,
}

impl AnnotationInstance {
    /// Majority kind and its vote share; a tie goes to exo.
    pub fn majority(&self) -> (ViewKind, f64) {
        let ego = self.votes.iter().filter(|&&v| v == ViewKind::Ego).count();
        let exo = self.votes.len() - ego;
        let n = self.votes.len().max(1) as f64;
        if ego > exo {
            (ViewKind::Ego, ego as f64 / n)
        } else {
            (ViewKind::Exo, exo as f64 / n)
        }
    }
}

/// Parse `7/9`-style or decimal agreement thresholds.
pub fn parse_threshold(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("bad agreement threshold {s:?}"));
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            if b <= 0.0 {
                return Err(bad());
            }
            a / b
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(bad());
    }
    Ok(v)
}

/// Keep instances whose majority share reaches `threshold`, labeled with the majority.
pub fn filter_instances(instances: &[AnnotationInstance], threshold: f64) -> Vec<AnnotationInstance> {
    instances
        .iter()
        .filter_map(|x| {
            let (kind, share) = x.majority();
            (share >= threshold - 1e-12).then(|| AnnotationInstance {
                accepted_label: Some(kind),
                ..x.clone()
            })
        })
        .collect()
}

/// Paired bootstrap on balanced accuracy; returns the two-sided p-value of `a != b`.
pub fn significance(
    preds_a: &[ViewKind],
    preds_b: &[ViewKind],
    inst: &[EvalInstance],
    n_resamples: usize,
    seed: u64,
) -> Result<f64> {
    if preds_a.len() != inst.len() || preds_b.len() != inst.len() {
        return Err(Error::LengthMismatch(preds_a.len().max(preds_b.len()), inst.len()));
    }
    if n_resamples < 100 {
        return Err(Error::TooFewResamples(n_resamples));
    }
    if inst.is_empty() {
        return Err(Error::DegenerateSubset("no instances".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = inst.len();
    let (mut le, mut ge) = (0usize, 0usize);
    let mut ra = Vec::with_capacity(n);
    let mut rb = Vec::with_capacity(n);
    let mut ri = Vec::with_capacity(n);
    for _ in 0..n_resamples {
        ra.clear();
        rb.clear();
        ri.clear();
        for _ in 0..n {
            let k = rng.gen_range(0..n);
            ra.push(preds_a[k]);
            rb.push(preds_b[k]);
            ri.push(inst[k].clone());
        }
        let d = balanced_accuracy(&ra, &ri) - balanced_accuracy(&rb, &ri);
        if d <= 0.0 {
            le += 1;
        }
        if d >= 0.0 {
            ge += 1;
        }
    }
    let m = n_resamples as f64;
    Ok((2.0 * (le as f64 / m).min(ge as f64 / m)).min(1.0))
}
