//! Majority-vote combination of prediction sets.

use std::collections::BTreeMap;

use crate::backends::PredictionSet;
use crate::error::{Error, Result};

/// Combine at least two prediction sets over the same task and id set.
///
/// Per sample, a label backed by strictly more than half the votes wins.
/// When no strict majority exists (even member counts or more than two
/// classes) the first member's prediction is used; the provenance string
/// records that policy.
pub fn majority_vote(members: &[PredictionSet]) -> Result<PredictionSet> {
    if members.len() < 2 {
        return Err(Error::Ensemble(format!(
            "need at least 2 members, got {}",
            members.len()
        )));
    }
    let first = &members[0];
    for (i, m) in members.iter().enumerate().skip(1) {
        if m.task.dataset != first.task.dataset || m.task.subtask != first.task.subtask {
            return Err(Error::Ensemble(format!(
                "member {i} is for task {}/{}, expected {}/{}",
                m.task.dataset, m.task.subtask, first.task.dataset, first.task.subtask
            )));
        }
        if m.predictions.len() != first.predictions.len()
            || !m.predictions.keys().eq(first.predictions.keys())
        {
            let missing: Vec<&String> = first
                .predictions
                .keys()
                .filter(|k| !m.predictions.contains_key(*k))
                .take(5)
                .collect();
            return Err(Error::Ensemble(format!(
                "member {i} id set differs from member 0 (e.g. missing {missing:?})"
            )));
        }
    }

    let half = members.len();
    let mut predictions = BTreeMap::new();
    for (id, first_label) in &first.predictions {
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for m in members {
            *votes.entry(m.predictions[id].as_str()).or_insert(0) += 1;
        }
        let winner = votes
            .iter()
            .find(|(_, &count)| count * 2 > half)
            .map(|(label, _)| label.to_string())
            .unwrap_or_else(|| first_label.clone());
        predictions.insert(id.clone(), winner);
    }

    let member_ids: Vec<&str> = members.iter().map(|m| m.provenance.as_str()).collect();
    Ok(PredictionSet {
        task: first.task.clone(),
        predictions,
        provenance: format!(
            "ensemble[majority-vote; ties fall back to first member]({})",
            member_ids.join(", ")
        ),
        ooc_count: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DatasetId, TaskSpec};

    fn pset(labels: &[&str], provenance: &str) -> PredictionSet {
        let task = TaskSpec::new(DatasetId::Hasoc2021, "task_1", &["HOF", "NOT"]);
        PredictionSet {
            task,
            predictions: labels
                .iter()
                .enumerate()
                .map(|(i, l)| (format!("s{i}"), l.to_string()))
                .collect(),
            provenance: provenance.to_string(),
            ooc_count: None,
        }
    }

    #[test]
    fn two_of_three_wins() {
        let out = majority_vote(&[
            pset(&["HOF"], "a"),
            pset(&["HOF"], "b"),
            pset(&["NOT"], "c"),
        ])
        .unwrap();
        assert_eq!(out.predictions["s0"], "HOF");
    }

    #[test]
    fn unanimity_passes_through() {
        let out = majority_vote(&[
            pset(&["NOT"], "a"),
            pset(&["NOT"], "b"),
            pset(&["NOT"], "c"),
        ])
        .unwrap();
        assert_eq!(out.predictions["s0"], "NOT");
    }

    #[test]
    fn all_binary_three_voter_patterns_equal_mode() {
        let labels = ["HOF", "NOT"];
        for bits in 0..8u8 {
            let votes: Vec<&str> = (0..3).map(|i| labels[((bits >> i) & 1) as usize]).collect();
            let out = majority_vote(&[
                pset(&[votes[0]], "a"),
                pset(&[votes[1]], "b"),
                pset(&[votes[2]], "c"),
            ])
            .unwrap();
            let hof = votes.iter().filter(|v| **v == "HOF").count();
            let mode = if hof >= 2 { "HOF" } else { "NOT" };
            assert_eq!(out.predictions["s0"], mode, "votes {votes:?}");
        }
    }

    #[test]
    fn even_tie_falls_back_to_first_member() {
        let out = majority_vote(&[
            pset(&["NOT"], "a"),
            pset(&["HOF"], "b"),
            pset(&["HOF"], "c"),
            pset(&["NOT"], "d"),
        ])
        .unwrap();
        assert_eq!(out.predictions["s0"], "NOT");
        assert!(out.provenance.contains("first member"));
    }

    #[test]
    fn odd_binary_ensembles_are_permutation_symmetric() {
        let members = [
            pset(&["HOF"], "a"),
            pset(&["NOT"], "b"),
            pset(&["HOF"], "c"),
        ];
        let base = majority_vote(&members).unwrap();
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for perm in perms {
            let reordered: Vec<PredictionSet> = perm.iter().map(|&i| members[i].clone()).collect();
            let out = majority_vote(&reordered).unwrap();
            assert_eq!(out.predictions, base.predictions);
        }
    }

    #[test]
    fn rejects_too_few_members_and_mismatched_ids() {
        assert!(majority_vote(&[pset(&["HOF"], "a")]).is_err());
        let mut odd = pset(&["HOF"], "b");
        odd.predictions
            .insert("extra".to_string(), "NOT".to_string());
        let err = majority_vote(&[pset(&["HOF"], "a"), odd]).unwrap_err();
        assert!(err.to_string().contains("id set"), "{err}");
    }
}
