//! Merges per-policy evaluation reports into one comparison table.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::online::OnlineReport;
use crate::pipeline::commands::FqeReport;

/// One comparison row per policy: off-policy score, mortality, compliance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportRow {
    pub policy_id: String,
    pub fqe_score_mean: Option<f64>,
    pub fqe_score_std: Option<f64>,
    pub ood_mean_q: Option<f64>,
    pub correlation_r: Option<f64>,
    pub correlation_p: Option<f64>,
    pub mortality_mean: Option<f64>,
    pub mortality_std: Option<f64>,
    pub safety_rate_mean: Option<f64>,
    pub safety_rate_std: Option<f64>,
    pub reduced_dp_mean: Option<f64>,
    pub reduced_dp_std: Option<f64>,
    pub cumulative_reward_mean: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Reads evaluation reports and writes the merged comparison CSV.
pub fn report_cmd(fqe_reports: &[impl AsRef<Path>], online_reports: &[impl AsRef<Path>], out: &Path) -> Result<()> {
    let mut rows: BTreeMap<String, ReportRow> = BTreeMap::new();
    for path in fqe_reports {
        let path = path.as_ref();
        let report: FqeReport = serde_json::from_slice(&fs::read(path).map_err(|e| {
            Error::Artifact(format!("missing FQE report {}: {e}", path.display()))
        })?)?;
        let row = rows.entry(report.policy_id.clone()).or_default();
        row.policy_id = report.policy_id.clone();
        row.fqe_score_mean = Some(report.fqe_score.mean);
        row.fqe_score_std = Some(report.fqe_score.std);
        row.ood_mean_q = report.ood_mean_q;
        row.correlation_r = Some(report.correlation_r);
        row.correlation_p = Some(report.correlation_p);
    }
    for path in online_reports {
        let path = path.as_ref();
        let report: OnlineReport = serde_json::from_slice(&fs::read(path).map_err(|e| {
            Error::Artifact(format!("missing online report {}: {e}", path.display()))
        })?)?;
        let row = rows.entry(report.policy_id.clone()).or_default();
        row.policy_id = report.policy_id.clone();
        row.mortality_mean = Some(report.p_death.mean);
        row.mortality_std = Some(report.p_death.std);
        row.safety_rate_mean = Some(report.safety_rate_pct.mean);
        row.safety_rate_std = Some(report.safety_rate_pct.std);
        row.reduced_dp_mean = Some(report.reduced_dp_rate_pct.mean);
        row.reduced_dp_std = Some(report.reduced_dp_rate_pct.std);
        row.cumulative_reward_mean = Some(report.cumulative_reward.mean);
    }
    if rows.is_empty() {
        return Err(Error::Data("no reports to merge".into()));
    }
    let mut out_file = std::io::BufWriter::new(fs::File::create(out)?);
    writeln!(
        out_file,
        "policy,fqe_score_mean,fqe_score_std,ood_mean_q,correlation_r,correlation_p,\
         mortality_mean,mortality_std,safety_rate_mean,safety_rate_std,\
         reduced_dp_mean,reduced_dp_std,cumulative_reward_mean"
    )?;
    for row in rows.values() {
        writeln!(
            out_file,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.policy_id,
            opt(row.fqe_score_mean),
            opt(row.fqe_score_std),
            opt(row.ood_mean_q),
            opt(row.correlation_r),
            opt(row.correlation_p),
            opt(row.mortality_mean),
            opt(row.mortality_std),
            opt(row.safety_rate_mean),
            opt(row.safety_rate_std),
            opt(row.reduced_dp_mean),
            opt(row.reduced_dp_std),
            opt(row.cumulative_reward_mean),
        )?;
    }
    out_file.flush()?;
    Ok(())
}
