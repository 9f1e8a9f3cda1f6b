//! Balanced metrics, significance and annotator agreement on hand-made inputs.

use swav::data::ViewKind::{Ego, Exo};
use swav::eval::{
    auc, average_precision, balanced_report, cohen_kappa, filter_instances, parse_threshold, significance, ApMode,
    EvalInstance,
};
use swav::model::Prediction;
use swav::synth::simulate_votes;

fn main() -> anyhow::Result<()> {
    println!("AUC  {:.4}", auc(&[0.9, 0.6, 0.4, 0.2], &[true, false, true, false])?);
    println!("AP   {:.4}", average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false])?);

    // Eight instances: four same-view, four view-switch.
    let inst: Vec<EvalInstance> = [(Ego, false), (Exo, false), (Exo, false), (Ego, false), (Ego, true), (Exo, true), (Ego, true), (Exo, true)]
        .iter()
        .map(|&(target, is_switch)| EvalInstance {
            target,
            is_switch,
            scenario: Some(if is_switch { "repair" } else { "cooking" }.into()),
        })
        .collect();
    let p_ego = [0.8, 0.3, 0.4, 0.6, 0.3, 0.2, 0.7, 0.6];
    let preds: Vec<Prediction> = p_ego.iter().map(|&p: &f64| Prediction::from_logits([p.ln(), (1.0 - p).ln()])).collect();
    let report = balanced_report(&preds, &inst, ApMode::Macro)?;
    println!("{}", serde_json::to_string_pretty(&report.balanced)?);

    let exo = vec![Exo; inst.len()];
    let kinds: Vec<_> = preds.iter().map(|p| p.kind()).collect();
    println!("p-value against all-exo: {:.3}", significance(&kinds, &exo, &inst, 1000, 0)?);

    let a = [Ego, Ego, Exo, Exo, Ego, Exo];
    let b = [Ego, Exo, Exo, Exo, Ego, Exo];
    println!("kappa {:.3}", cohen_kappa(&a, &b)?);

    let votes = simulate_votes(1000, 9, 0.4, 3);
    for t in ["7/9", "8/9", "9/9"] {
        println!("agreement {t}: {} instances kept", filter_instances(&votes, parse_threshold(t)?).len());
    }
    Ok(())
}
