//! Replication orchestration and CSV assembly. An experiment is one
//! configuration executed `replications` times under seeds `master_seed + r`,
//! summarized per priority class; the benchmark sweep repeats that across
//! both protocols, every network size, and both fragment sizes.

use crate::configfile::ExperimentConfig;
use crate::metrics::{summarize, ClassSummary};
use crate::sim::{run, ProtocolKind, RunOptions, SimFault};
use crate::traffic::Priority;

pub const CSV_HEADER: &str = "protocol,node_count,fragment_payload,priority,mean_delay_ms,\
delay_ci_ms,throughput_Bps,throughput_ci_Bps,delivered,dropped,collisions";

/// One CSV row: a (configuration, priority class) summary over replications.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub protocol: ProtocolKind,
    pub node_count: u32,
    /// Zero when fragmentation does not apply to the protocol.
    pub fragment_payload: u32,
    pub priority: Priority,
    pub summary: ClassSummary,
}

fn cell(v: Option<f64>) -> String {
    // Fixed six decimals keeps output byte-identical across hosts; absent
    // statistics (one replication, or nothing delivered) leave the cell empty.
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        let s = &self.summary;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.protocol,
            self.node_count,
            self.fragment_payload,
            self.priority,
            cell(s.mean_delay_ms),
            cell(s.delay_ci_ms),
            cell(Some(s.throughput_bps)),
            cell(s.throughput_ci_bps),
            s.delivered,
            s.dropped,
            s.collisions,
        )
    }
}

/// Header plus one line per row, LF endings, trailing newline.
pub fn csv_document(rows: &[ResultRow]) -> String {
    let mut doc = String::from(CSV_HEADER);
    doc.push('\n');
    for row in rows {
        doc.push_str(&row.csv_line());
        doc.push('\n');
    }
    doc
}

/// Executes the configured replications and returns one row per priority
/// class, urgent first.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, SimFault> {
    let mut reps = Vec::with_capacity(cfg.replications as usize);
    for rep in 0..cfg.replications {
        let sim = cfg.sim_config(cfg.rep_seed(rep));
        let out = run(&sim, &RunOptions::default())?;
        reps.push(out.metrics);
    }
    let fragment_payload = match cfg.protocol {
        ProtocolKind::Bop => 0,
        ProtocolKind::Frog => cfg.fragment_payload,
    };
    Ok(summarize(&reps)
        .into_iter()
        .map(|(priority, summary)| ResultRow {
            protocol: cfg.protocol,
            node_count: cfg.node_count,
            fragment_payload,
            priority,
            summary,
        })
        .collect())
}

/// The four benchmark files. The delay and throughput views are sliced from
/// the same runs and share the full schema, so each pair is identical; the
/// split exists because consumers address them as four figures.
pub struct FigureSet {
    pub fig4a: String,
    pub fig4b: String,
    pub fig5a: String,
    pub fig5b: String,
}

impl FigureSet {
    pub fn files(&self) -> [(&'static str, &str); 4] {
        [
            ("fig4a.csv", self.fig4a.as_str()),
            ("fig4b.csv", self.fig4b.as_str()),
            ("fig5a.csv", self.fig5a.as_str()),
            ("fig5b.csv", self.fig5b.as_str()),
        ]
    }
}

/// Full sweep: network sizes 2..=11, both protocols, and for the fragmenting
/// protocol both benchmark fragment sizes. `base` supplies duration,
/// replication count, seed, warm-up, and traffic settings. The
/// non-fragmenting runs are executed once and their rows shared by both
/// fragment-size variants.
pub fn sweep_figures(base: &ExperimentConfig) -> Result<FigureSet, SimFault> {
    let mut rows_frag16: Vec<ResultRow> = Vec::new();
    let mut rows_frag2: Vec<ResultRow> = Vec::new();
    for node_count in 2..=11u32 {
        let bop = ExperimentConfig {
            protocol: ProtocolKind::Bop,
            node_count,
            ..base.clone()
        };
        let bop_rows = run_experiment(&bop)?;
        rows_frag16.extend(bop_rows.iter().cloned());
        rows_frag2.extend(bop_rows);
        for (fragment_payload, rows) in [(16, &mut rows_frag16), (2, &mut rows_frag2)] {
            let frog = ExperimentConfig {
                protocol: ProtocolKind::Frog,
                node_count,
                fragment_payload,
                ..base.clone()
            };
            rows.extend(run_experiment(&frog)?);
        }
    }
    let a = csv_document(&rows_frag16);
    let b = csv_document(&rows_frag2);
    Ok(FigureSet {
        fig4a: a.clone(),
        fig5a: a,
        fig4b: b.clone(),
        fig5b: b,
    })
}
