//! Displacement metrics and stratified long-tail reports.

use crate::attributes::StratificationResult;
use crate::geom::Vec2;
use crate::prediction::PredictionSet;
use serde::Serialize;
use std::collections::HashMap;
use std::io::{self, Write};

/// Default miss threshold, meters.
pub const MISS_THRESHOLD: f64 = 2.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown scene id {0}")]
    UnknownSceneId(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub count: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: f64,
}

/// One scene's `(minADE, minFDE, missed)` over the first `steps` steps.
pub fn scene_metrics(pred: &PredictionSet, truth: &[Vec2], steps: usize, delta: f64) -> Result<(f64, f64, bool), EvalError> {
    if pred.locations.is_empty() || steps == 0 || steps > truth.len() || pred.locations.iter().any(|m| m.len() < steps) {
        return Err(EvalError::ShapeMismatch(format!(
            "{} modes, truth length {}, {steps} steps requested",
            pred.locations.len(),
            truth.len()
        )));
    }
    let mut ade = f64::INFINITY;
    let mut fde = f64::INFINITY;
    for mode in &pred.locations {
        let a = mode[..steps].iter().zip(truth).map(|(p, x)| (*p - *x).norm()).sum::<f64>() / steps as f64;
        ade = ade.min(a);
        fde = fde.min((mode[steps - 1] - truth[steps - 1]).norm());
    }
    Ok((ade, fde, fde > delta))
}

fn aggregate(rows: impl Iterator<Item = (f64, f64, bool)>) -> Metrics {
    let (mut n, mut ade, mut fde, mut miss) = (0usize, 0.0, 0.0, 0usize);
    for (a, f, m) in rows {
        n += 1;
        ade += a;
        fde += f;
        miss += m as usize;
    }
    if n == 0 {
        return Metrics {
            count: 0,
            min_ade: 0.0,
            min_fde: 0.0,
            miss_rate: 0.0,
        };
    }
    Metrics {
        count: n,
        min_ade: ade / n as f64,
        min_fde: fde / n as f64,
        miss_rate: miss as f64 / n as f64,
    }
}

/// Scene-averaged minADE and minFDE, and the fraction of scenes whose best
/// final error exceeds `delta`.
pub fn compute_metrics(preds: &[PredictionSet], truths: &[Vec<Vec2>], delta: f64) -> Result<Metrics, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::ShapeMismatch(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    if !(delta > 0.0) {
        return Err(EvalError::InvalidArgument(format!("miss threshold must be positive, got {delta}")));
    }
    let rows = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| scene_metrics(p, t, t.len(), delta))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(rows.into_iter()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub subset: String,
    pub horizon_s: f64,
    pub count: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: f64,
}

/// Rows for every Top-k% subset, the rest, and all scenes, at each horizon
/// in seconds. A horizon covers `round(h / dt)` steps.
pub fn stratified_report(
    ids: &[String],
    preds: &[PredictionSet],
    truths: &[Vec<Vec2>],
    strata: &StratificationResult,
    horizons: &[f64],
    dt: f64,
    delta: f64,
) -> Result<Vec<MetricRow>, EvalError> {
    if ids.len() != preds.len() || preds.len() != truths.len() {
        return Err(EvalError::ShapeMismatch("ids, predictions and truths differ in length".into()));
    }
    if !(delta > 0.0) || !(dt > 0.0) {
        return Err(EvalError::InvalidArgument("miss threshold and dt must be positive".into()));
    }
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let lookup = |list: &[String]| -> Result<Vec<usize>, EvalError> {
        list.iter()
            .map(|id| index.get(id.as_str()).copied().ok_or_else(|| EvalError::UnknownSceneId(id.clone())))
            .collect()
    };
    let mut subsets: Vec<(String, Vec<usize>)> = Vec::new();
    for s in &strata.subsets {
        subsets.push((format!("top{}", s.percent), lookup(&s.ids)?));
    }
    subsets.push(("rest".into(), lookup(&strata.rest)?));
    subsets.push(("all".into(), (0..ids.len()).collect()));

    let mut rows = Vec::new();
    for &h in horizons {
        let steps = (h / dt).round();
        if !(steps >= 1.0) {
            return Err(EvalError::InvalidArgument(format!("horizon {h} s is shorter than one step")));
        }
        let per_scene = preds
            .iter()
            .zip(truths)
            .map(|(p, t)| scene_metrics(p, t, steps as usize, delta))
            .collect::<Result<Vec<_>, _>>()?;
        for (name, members) in &subsets {
            let m = aggregate(members.iter().map(|&i| per_scene[i]));
            rows.push(MetricRow {
                subset: name.clone(),
                horizon_s: h,
                count: m.count,
                min_ade: m.min_ade,
                min_fde: m.min_fde,
                miss_rate: m.miss_rate,
            });
        }
    }
    Ok(rows)
}

pub const REPORT_HEADER: &str = "subset,horizon_s,count,min_ade,min_fde,miss_rate";

pub fn write_report(rows: &[MetricRow], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.subset, r.horizon_s, r.count, r.min_ade, r.min_fde, r.miss_rate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::stratify_topk;

    fn straight(y: f64) -> Vec<Vec2> {
        (1..=3).map(|i| Vec2::new(i as f64, y)).collect()
    }

    #[test]
    fn exact_mode_is_free() {
        let p = PredictionSet::uniform(vec![straight(5.0), straight(0.0)]);
        let m = compute_metrics(&[p], &[straight(0.0)], MISS_THRESHOLD).unwrap();
        assert_eq!((m.min_ade, m.min_fde, m.miss_rate), (0.0, 0.0, 0.0));
    }

    #[test]
    fn miss_indicator() {
        let p = PredictionSet::uniform(vec![straight(2.5), straight(1.9)]);
        let (_, fde, missed) = scene_metrics(&p, &straight(0.0), 3, 2.0).unwrap();
        assert!((fde - 1.9).abs() < 1e-12);
        assert!(!missed);
        let p = PredictionSet::uniform(vec![straight(2.5), straight(-2.1)]);
        assert!(scene_metrics(&p, &straight(0.0), 3, 2.0).unwrap().2);
    }

    #[test]
    fn report_rows_and_unknown_ids() {
        let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let preds: Vec<PredictionSet> = (0..4).map(|i| PredictionSet::uniform(vec![straight(i as f64)])).collect();
        let truths = vec![straight(0.0); 4];
        let vals: Vec<(String, f64)> = ids.iter().cloned().zip([1.0, 4.0, 2.0, 3.0]).collect();
        let strata = stratify_topk(&vals, &[25.0, 50.0]).unwrap();
        let rows = stratified_report(&ids, &preds, &truths, &strata, &[1.0, 3.0], 1.0, 2.0).unwrap();
        assert_eq!(rows.len(), 8);
        let top = rows.iter().find(|r| r.subset == "top25" && r.horizon_s == 3.0).unwrap();
        assert_eq!(top.count, 1);
        assert_eq!(top.min_fde, 1.0);
        let full = rows.iter().find(|r| r.subset == "all" && r.horizon_s == 3.0).unwrap();
        assert_eq!(full.min_ade, compute_metrics(&preds, &truths, 2.0).unwrap().min_ade);

        let mut bad = strata.clone();
        bad.rest.push("ghost".into());
        assert_eq!(
            stratified_report(&ids, &preds, &truths, &bad, &[1.0], 1.0, 2.0),
            Err(EvalError::UnknownSceneId("ghost".into()))
        );
    }
}
