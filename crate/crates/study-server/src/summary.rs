use serde::{Deserialize, Serialize};

use pllb_core::harness::mean_sd;

use crate::condition::StudyCondition;
use crate::trial::TrialLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: StudyCondition,
    pub n: usize,
    pub steps_mean: f64,
    pub steps_sd: f64,
    pub usefulness_mean: f64,
    pub usefulness_sd: f64,
}

/// Conditions without a completed trial are left out rather than reported
/// as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub conditions: Vec<ConditionSummary>,
}

/// Per-condition mean and sample sd over completed trials.
pub fn study_summary(logs: &[TrialLog]) -> StudySummary {
    let conditions = StudyCondition::ALL
        .iter()
        .filter_map(|&c| {
            let done: Vec<&TrialLog> = logs
                .iter()
                .filter(|l| l.condition == c && l.completed)
                .collect();
            if done.is_empty() {
                return None;
            }
            let steps: Vec<f64> = done.iter().map(|l| l.steps as f64).collect();
            let useful: Vec<f64> = done.iter().map(|l| l.usefulness as f64).collect();
            let (steps_mean, steps_sd) = mean_sd(&steps);
            let (usefulness_mean, usefulness_sd) = mean_sd(&useful);
            Some(ConditionSummary {
                condition: c,
                n: done.len(),
                steps_mean,
                steps_sd,
                usefulness_mean,
                usefulness_sd,
            })
        })
        .collect();
    StudySummary { conditions }
}

impl StudySummary {
    pub fn get(&self, c: StudyCondition) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|s| s.condition == c)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.conditions {
            w.serialize(row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is UTF-8")
    }
}
