//! Independent replay of the co-training selection and transfer rules.

use std::collections::{BTreeMap, BTreeSet};

use mct_core::cotrain::{CoTrainConfig, CoTraining};
use mct_core::math::Matrix;
use mct_core::SslData;

#[derive(Debug, Default)]
pub struct TraceSummary {
    pub iterations: usize,
    pub conflicts: usize,
    pub agreements: usize,
    pub transferred: usize,
}

fn row_of(data: &SslData, v: usize, index: usize) -> Vec<f64> {
    let n_l = data.labeled.len();
    if index < n_l {
        data.labeled.view(v).embeddings().row(index).to_vec()
    } else {
        data.unlabeled.view(v).embeddings().row(index - n_l).to_vec()
    }
}

/// Run co-training until the unlabeled pool is empty or `max_iterations`,
/// checking every rule after every iteration.
pub fn check_cotrain_trace(data: &SslData, cfg: CoTrainConfig) -> Result<TraceSummary, String> {
    let mut engine = CoTraining::new(data, cfg).map_err(|e| e.to_string())?;
    let n_l = data.labeled.len();
    let u0 = data.unlabeled.len();
    let all: BTreeSet<usize> = (0..n_l + u0).collect();
    let quota = (cfg.k_fraction * u0 as f64).floor() as usize;
    let mut left_u: BTreeSet<usize> = BTreeSet::new();
    let mut summary = TraceSummary::default();

    for it in 0..cfg.max_iterations {
        let u_before = engine.state.unlabeled.clone();
        if u_before.is_empty() {
            break;
        }
        let pools_before = engine.state.pools.clone();
        let picks = engine.select().map_err(|e| e.to_string())?;

        for (v, pick) in picks.iter().enumerate() {
            let want = quota.min(u_before.len());
            if pick.len() != want {
                return Err(format!("iteration {it}: model {v} picked {} instead of {want}", pick.len()));
            }
            let set: BTreeSet<usize> = pick.indices.iter().copied().collect();
            if set.len() != pick.len() || !set.is_subset(&u_before) {
                return Err(format!("iteration {it}: model {v} picks are not distinct unlabeled instances"));
            }
            // Confidence is the maximum probability; nothing left behind is
            // more confident than the least confident pick.
            let rows: Vec<Vec<f64>> = u_before.iter().map(|&i| row_of(data, v, i)).collect();
            let probs = engine.state.models[v]
                .predict(&Matrix::from_rows(&rows).unwrap())
                .map_err(|e| e.to_string())?;
            let conf: BTreeMap<usize, (f64, usize)> = u_before
                .iter()
                .enumerate()
                .map(|(r, &i)| {
                    let row = probs.row(r);
                    let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
                    (i, (row[best], best))
                })
                .collect();
            for ((&i, &l), &c) in pick.indices.iter().zip(&pick.labels).zip(&pick.confidences) {
                if conf[&i] != (c, l) {
                    return Err(format!("iteration {it}: model {v} pick {i} has wrong confidence or label"));
                }
            }
            let floor = pick.confidences.iter().cloned().fold(f64::INFINITY, f64::min);
            if u_before.iter().any(|i| !set.contains(i) && conf[i].0 > floor) {
                return Err(format!("iteration {it}: model {v} skipped a more confident instance"));
            }
        }

        let labels: [BTreeMap<usize, usize>; 2] = [0, 1].map(|v| {
            picks[v].indices.iter().copied().zip(picks[v].labels.iter().copied()).collect()
        });
        let conflicts: BTreeSet<usize> = labels[0]
            .iter()
            .filter(|(i, l)| labels[1].get(i).is_some_and(|m| m != *l))
            .map(|(i, _)| *i)
            .collect();
        let agreements = labels[0].iter().filter(|(i, l)| labels[1].get(i) == Some(l)).count();

        let report = engine.cotrain_iteration().map_err(|e| e.to_string())?;
        if report.conflicts != conflicts.len() {
            return Err(format!("iteration {it}: reported {} conflicts, expected {}", report.conflicts, conflicts.len()));
        }

        let mut consumed = BTreeSet::new();
        for v in 0..2 {
            // Pool v receives the other model's non-conflicting picks.
            let src = 1 - v;
            let expected_new: Vec<(usize, usize)> = picks[src]
                .indices
                .iter()
                .copied()
                .zip(picks[src].labels.iter().copied())
                .filter(|(i, _)| !conflicts.contains(i))
                .collect();
            consumed.extend(expected_new.iter().map(|e| e.0));
            let after = &engine.state.pools[v];
            if after.len() != pools_before[v].len() + expected_new.len() || after[..pools_before[v].len()] != pools_before[v][..] {
                return Err(format!("iteration {it}: pool {v} did not grow by exactly the transferred picks"));
            }
            let added: Vec<(usize, usize)> = after[pools_before[v].len()..].iter().map(|e| (e.index, e.label)).collect();
            if added != expected_new {
                return Err(format!("iteration {it}: pool {v} received the wrong entries"));
            }
            let distinct: BTreeSet<usize> = after.iter().map(|e| e.index).collect();
            if distinct.len() != after.len() {
                return Err(format!("iteration {it}: pool {v} holds a duplicate"));
            }
        }
        let expected_u: BTreeSet<usize> = u_before.difference(&consumed).copied().collect();
        if engine.state.unlabeled != expected_u || !conflicts.is_subset(&engine.state.unlabeled) {
            return Err(format!("iteration {it}: unlabeled pool is wrong after transfer"));
        }
        if !left_u.is_disjoint(&consumed) {
            return Err(format!("iteration {it}: an instance left the unlabeled pool twice"));
        }
        left_u.extend(consumed.iter().copied());

        // Conservation and label agreement across both pools.
        let p0: BTreeMap<usize, usize> = engine.state.pools[0].iter().map(|e| (e.index, e.label)).collect();
        let p1: BTreeMap<usize, usize> = engine.state.pools[1].iter().map(|e| (e.index, e.label)).collect();
        let mut union: BTreeSet<usize> = engine.state.unlabeled.clone();
        union.extend(p0.keys());
        union.extend(p1.keys());
        if union != all {
            return Err(format!("iteration {it}: pools and unlabeled set do not cover every instance"));
        }
        if engine.state.unlabeled.iter().any(|i| p0.contains_key(i) || p1.contains_key(i)) {
            return Err(format!("iteration {it}: an unlabeled instance is also pooled"));
        }
        for (i, l) in &p0 {
            if *i >= n_l && p1.get(i).is_some_and(|m| m != l) {
                return Err(format!("iteration {it}: instance {i} entered both pools with different labels"));
            }
        }

        summary.iterations += 1;
        summary.conflicts += conflicts.len();
        summary.agreements += agreements;
        summary.transferred += report.transferred[0] + report.transferred[1];
    }
    Ok(summary)
}
