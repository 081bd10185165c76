//! `report.csv`: one row per slab followed by a `#`-prefixed footer of `key,value` lines.
//!
//! Numbers are written in shortest round-trip scientific notation.

use std::collections::BTreeMap;

use crate::estimators::{Dimension, RunReport};

/// Label carried by every report: `Λ_h` is an inflated discrete eigenvalue, not a certified bound.
pub const SPECTRAL_LABEL: &str = "heuristic-spectral";

pub const COLUMNS: [&str; 20] = [
    "n",
    "t_n",
    "k_n",
    "L1",
    "int_L2",
    "int_Theta1",
    "int_Theta2",
    "E2_tn_2",
    "E2_tn_4",
    "E2_tn_6",
    "E2_tn_inf",
    "mesh_change_E",
    "alpha_sup",
    "beta_sup",
    "gamma_sup",
    "lambda_h",
    "Lambda_h",
    "eta4_cum",
    "D_cum",
    "newton_residual",
];

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn render_report(r: &RunReport) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    let eta4 = r.eta4_cumulative();
    let dcum = r.d_cumulative();
    for (i, s) in r.slabs.iter().enumerate() {
        let p = &s.inputs;
        let row = [
            num(p.t),
            num(p.k()),
            num(p.l1),
            num(p.int_l2),
            num(s.int_theta1),
            num(s.int_theta2),
            num(p.e_cur[0]),
            num(p.e_cur[1]),
            num(p.e_cur[2]),
            num(p.e_inf_cur),
            num(p.mesh_change[0]),
            num(s.alpha_sup),
            num(s.beta_sup),
            num(s.gamma_sup),
            num(p.lambda_cur),
            num(p.lambda_bound_cur),
            num(eta4[i]),
            num(dcum[i]),
            num(p.newton_residual),
        ];
        out.push_str(&p.n.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v);
        }
        out.push('\n');
    }
    for (k, v) in footer(r) {
        out.push_str(&format!("# {k},{v}\n"));
    }
    out
}

fn footer(r: &RunReport) -> Vec<(&'static str, String)> {
    let c = &r.constants;
    let three = r.dimension == Dimension::Three;
    vec![
        ("spectral", SPECTRAL_LABEL.to_string()),
        ("dimension", (r.dimension.value() as u32).to_string()),
        ("epsilon", num(r.epsilon)),
        ("final_time", num(r.final_time)),
        ("slabs", r.slabs.len().to_string()),
        ("eta_d", num(r.eta)),
        ("E_d", num(r.e_d)),
        ("vacuous", r.vacuous.to_string()),
        ("B_bar", num(r.b_bar)),
        ("condition_lhs", num(r.condition.lhs)),
        ("condition_rhs", num(r.condition.rhs)),
        ("condition_satisfied", r.condition.satisfied.to_string()),
        ("bound_L4_L4", num(r.bounds.l4l4)),
        ("bound_L2_H1", num(r.bounds.l2h1)),
        ("bound_Linf_L2", num(r.bounds.linf_l2)),
        ("theta_L4_L4", num(r.theta.l4l4)),
        ("theta_L2_H1", num(r.theta.l2h1)),
        ("theta_Linf_L2", num(r.theta.linf_l2)),
        ("lambda_integral", num(r.lambda_integral)),
        ("fitted_m", num(r.fitted_m)),
        ("C_PF", num(c.c_pf)),
        ("c_tilde", num(c.c_tilde)),
        ("C_SZ", num(c.c_sz)),
        ("C_Omega", num(c.c_omega)),
        ("safety", num(c.safety)),
        ("C0", num(if three { c.c0_tilde() } else { c.c0() })),
        ("C1", num(if three { c.c1_tilde() } else { c.c1() })),
        ("C2", num(if three { c.c2_tilde() } else { c.c2() })),
    ]
}

/// Parsed `report.csv`: data rows by column and footer entries by key.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub footer: BTreeMap<String, String>,
}

impl ParsedReport {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn footer_f64(&self, key: &str) -> Option<f64> {
        self.footer.get(key)?.parse().ok()
    }
}

pub fn parse_report(text: &str) -> Result<ParsedReport, String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty report")?
        .split(',')
        .map(str::to_string)
        .collect();
    if header != COLUMNS {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    let mut footer = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if let Some(rest) = line.strip_prefix("# ") {
            let (k, v) = rest
                .split_once(',')
                .ok_or(format!("line {}: malformed footer", i + 2))?;
            footer.insert(k.to_string(), v.to_string());
            continue;
        }
        if !footer.is_empty() {
            return Err(format!("line {}: data after footer", i + 2));
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", i + 2))?;
        if row.len() != COLUMNS.len() {
            return Err(format!("line {}: {} fields", i + 2, row.len()));
        }
        rows.push(row);
    }
    Ok(ParsedReport {
        header,
        rows,
        footer,
    })
}

/// `t,lambda_h,Lambda_h,residual` rows for the `eigen` subcommand.
pub fn render_eigen_csv(samples: &[crate::spectral::SpectralSample]) -> String {
    let mut out = String::from("t,lambda_h,Lambda_h,residual\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{}\n",
            num(s.t),
            num(s.lambda),
            num(s.lambda_bound),
            num(s.residual)
        ));
    }
    out
}
