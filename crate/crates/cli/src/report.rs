use serde::{Deserialize, Serialize};
use yann_core::envs::EnvKind;
use yann_core::rl::{AgentKind, EpisodeResult};

use crate::artifacts::Provenance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub episode: usize,
    pub seed: u64,
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_: f64,
    pub change: f64,
}

/// Before/after costs of one agent on the fixed evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub env: EnvKind,
    pub agent: AgentKind,
    pub rows: Vec<ReportRow>,
    pub avg_initial: f64,
    pub avg_final: f64,
    pub avg_change: f64,
    /// Unsafe steps seen while training.
    pub train_violations: usize,
    /// Evaluation episodes (initial plus final) that entered the unsafe set.
    pub eval_violations: usize,
    pub train_episodes: usize,
    pub provenance: Provenance,
}

impl BenchmarkReport {
    pub fn new(
        env: EnvKind,
        agent: AgentKind,
        initial: &[EpisodeResult],
        final_: &[EpisodeResult],
        train_violations: usize,
        train_episodes: usize,
        provenance: Provenance,
    ) -> Self {
        assert_eq!(
            initial.len(),
            final_.len(),
            "initial and final evaluations must pair up"
        );
        let rows: Vec<ReportRow> = initial
            .iter()
            .zip(final_)
            .enumerate()
            .map(|(i, (a, b))| {
                debug_assert_eq!(a.seed, b.seed);
                ReportRow {
                    episode: i + 1,
                    seed: a.seed,
                    initial: a.total_cost,
                    final_: b.total_cost,
                    change: b.total_cost - a.total_cost,
                }
            })
            .collect();
        let eval_violations = initial.iter().chain(final_).filter(|e| e.violation).count();
        let mut r = BenchmarkReport {
            env,
            agent,
            rows,
            avg_initial: 0.0,
            avg_final: 0.0,
            avg_change: 0.0,
            train_violations,
            eval_violations,
            train_episodes,
            provenance,
        };
        r.recompute();
        r
    }

    /// Averages from the rows.
    pub fn recompute(&mut self) {
        let n = self.rows.len().max(1) as f64;
        self.avg_initial = self.rows.iter().map(|r| r.initial).sum::<f64>() / n;
        self.avg_final = self.rows.iter().map(|r| r.final_).sum::<f64>() / n;
        self.avg_change = self.rows.iter().map(|r| r.change).sum::<f64>() / n;
    }

    pub fn safety_violations(&self) -> usize {
        self.train_violations + self.eval_violations
    }

    /// `change = final − initial` per row and averages equal to the row
    /// means, to within round-off.
    pub fn is_consistent(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        let mut fresh = self.clone();
        fresh.recompute();
        self.rows
            .iter()
            .all(|r| close(r.change, r.final_ - r.initial))
            && close(fresh.avg_initial, self.avg_initial)
            && close(fresh.avg_final, self.avg_final)
            && close(fresh.avg_change, self.avg_change)
    }

    /// Per-episode rows as CSV (no provenance line).
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("episode,seed,initial,final,change\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.episode, r.seed, r.initial, r.final_, r.change
            ));
        }
        s
    }
}

/// The agents side by side: one `Initial Final Change` group per agent,
/// an average row, and a safety row for the reactor.
pub fn render_table(reports: &[BenchmarkReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    const W: usize = 11;
    let mut out = String::new();
    let mut line = format!("{:<18}", "");
    for r in reports {
        line.push_str(&format!(
            "| {:^w$} ",
            r.agent.to_string().to_uppercase(),
            w = 3 * W + 2
        ));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    let mut line = format!("{:<18}", "Episode");
    for _ in reports {
        line.push_str(&format!(
            "| {:>W$} {:>W$} {:>W$} ",
            "Initial", "Final", "Change"
        ));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    let rule = "-".repeat(18 + reports.len() * (3 * W + 5));
    out.push_str(&rule);
    out.push('\n');
    for (i, row) in first.rows.iter().enumerate() {
        let mut line = format!("{:<18}", row.episode);
        for r in reports {
            let x = &r.rows[i];
            line.push_str(&format!(
                "| {:>W$.2} {:>W$.2} {:>W$.2} ",
                x.initial, x.final_, x.change
            ));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out.push_str(&rule);
    out.push('\n');
    let mut line = format!("{:<18}", "Average");
    for r in reports {
        line.push_str(&format!(
            "| {:>W$.2} {:>W$.2} {:>W$.2} ",
            r.avg_initial, r.avg_final, r.avg_change
        ));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    if first.env == EnvKind::Cstr {
        let mut line = format!("{:<18}", "Safety Violations");
        for r in reports {
            line.push_str(&format!("| {:>w$} ", r.safety_violations(), w = 3 * W + 2));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
