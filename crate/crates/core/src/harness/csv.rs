//! CSV rows and C-style `%.12g` number formatting.

use std::io::Write;

use crate::error::Result;

/// Column order of the result table.
pub const HEADER: &str = "kind,lambda,trial,estimator,overlap_u,overlap_v,mse_uu,mse_vv,mse_uv,sigma1,sigma2,seed";

/// Formats like C's `printf("%.{precision}g", x)`.
pub fn format_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let p = precision.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Rounding to p significant digits may bump the exponent (9.99… → 10),
    // so take the exponent from the rounded scientific form.
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| format_g(v, 12)).unwrap_or_default()
}

/// Kind of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Theory,
    Sim,
}

/// One line of the result table; `None` renders as an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub kind: RowKind,
    pub lambda: f64,
    pub trial: Option<usize>,
    pub estimator: Option<&'static str>,
    pub overlap_u: Option<f64>,
    pub overlap_v: Option<f64>,
    pub mse_uu: Option<f64>,
    pub mse_vv: Option<f64>,
    pub mse_uv: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub seed: Option<u64>,
}

impl Row {
    pub fn render(&self) -> String {
        let kind = match self.kind {
            RowKind::Theory => "theory",
            RowKind::Sim => "sim",
        };
        [
            kind.to_string(),
            format_g(self.lambda, 12),
            self.trial.map(|t| t.to_string()).unwrap_or_default(),
            self.estimator.unwrap_or("").to_string(),
            cell(self.overlap_u),
            cell(self.overlap_v),
            cell(self.mse_uu),
            cell(self.mse_vv),
            cell(self.mse_uv),
            cell(self.sigma1),
            cell(self.sigma2),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
        ]
        .join(",")
    }
}

/// Writes a `# generated_unix=…` line, the header, and the rows.
pub fn write_table(out: &mut impl Write, rows: &[Row], timestamp: u64) -> Result<()> {
    writeln!(out, "# generated_unix={timestamp}")?;
    writeln!(out, "{HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.render())?;
    }
    Ok(())
}
