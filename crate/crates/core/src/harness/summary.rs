//! Cross-seed aggregation of metric samples.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, EnvKind, Method};
use super::record::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    /// Metric episode index (episodes completed across phases).
    pub episode: usize,
    pub n: usize,
    pub reward_mean: f64,
    pub reward_sd: f64,
    pub interpretability_mean: Option<f64>,
    pub interpretability_sd: Option<f64>,
}

/// Mean and sample standard deviation. The values are sorted before
/// summing so the result does not depend on input order.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// One row per (method, checkpoint), sorted by method then episode.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>, ConfigError> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let env: EnvKind = first.env();
    if let Some(r) = records.iter().find(|r| r.env() != env) {
        return Err(ConfigError::Invalid(format!(
            "records mix environments: {:?} and {:?}",
            env,
            r.env()
        )));
    }
    type Cell = (Vec<f64>, Vec<f64>);
    let mut groups: BTreeMap<(Method, usize), Cell> = BTreeMap::new();
    for r in records {
        for m in r.metrics() {
            let cell = groups.entry((r.method(), m.episode)).or_default();
            cell.0.push(m.reward);
            if let Some(i) = m.interpretability {
                cell.1.push(i);
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|((method, episode), (rewards, interp))| {
            let (reward_mean, reward_sd) = mean_sd(&rewards);
            let (im, isd) = if interp.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sd(&interp);
                (Some(m), Some(s))
            };
            SummaryRow {
                method,
                episode,
                n: rewards.len(),
                reward_mean,
                reward_sd,
                interpretability_mean: im,
                interpretability_sd: isd,
            }
        })
        .collect())
}

/// Keep only the given checkpoints.
pub fn at_checkpoints(rows: &[SummaryRow], checkpoints: &[usize]) -> Vec<SummaryRow> {
    rows.iter()
        .filter(|r| checkpoints.contains(&r.episode))
        .cloned()
        .collect()
}

pub fn write_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "method",
        "episode",
        "n",
        "reward_mean",
        "reward_sd",
        "interpretability_mean",
        "interpretability_sd",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.method.as_str().to_string(),
            r.episode.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.reward_mean),
            format!("{:.6}", r.reward_sd),
            opt(r.interpretability_mean),
            opt(r.interpretability_sd),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[SummaryRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        let (m, s) = mean_sd(&[0.2, 0.4]);
        assert!((m - 0.3).abs() < 1e-12);
        // sqrt(((0.1)^2 + (0.1)^2) / 1)
        assert!((s - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_sd(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn order_does_not_matter() {
        let a = [0.1, 1e16, -1e16, 0.3];
        let b = [0.3, -1e16, 0.1, 1e16];
        assert_eq!(mean_sd(&a), mean_sd(&b));
    }
}
