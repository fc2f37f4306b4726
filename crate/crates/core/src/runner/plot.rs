//! Emits standalone matplotlib scripts for a time-series CSV. The script
//! needs only the CSV file and the python standard library plus matplotlib.

use std::path::Path;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};

const TEMPLATE: &str = r#"#!/usr/bin/env python3
"""Diagnostics plots for one run. Usage: python3 SCRIPT [CSV] [PNG]"""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CSV = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, @CSV@)
PNG = sys.argv[2] if len(sys.argv) > 2 else os.path.splitext(CSV)[0] + ".png"
EXPECTED = @COLUMNS@

with open(CSV, newline="") as fh:
    reader = csv.reader(fh)
    header = next(reader)
    if header != EXPECTED:
        sys.exit("unexpected header in " + CSV)
    rows = [[float(x) for x in row] for row in reader]

col = {name: [r[i] for r in rows] for i, name in enumerate(header)}
t = col["t"]


def positive(xs):
    return [x if x > 0 else float("nan") for x in xs]


fig, ax = plt.subplots(2, 2, figsize=(11, 8), sharex=True)

a = ax[0][0]
a.semilogy(t, positive([k + i for k, i in zip(col["kinetic"], col["internal"])]), label="E")
a.semilogy(t, positive([k + l for k, l in zip(col["kinetic"], col["l2_rho_dev"])]), label="kinetic + |rho-1|^2")
a.semilogy(t, positive([d + e for d, e in zip(col["dissipation_damping"], col["dissipation_alignment"])]), label="D")
a.semilogy(t, positive(col["v_eps"]), "--", label="V_eps")
a.set_title("energy")
a.legend()

a = ax[0][1]
a.semilogy(t, positive([s * s + u * u for s, u in zip(col["hs_sigma"], col["hs_u"])]), label="|sigma|^2 + |u|^2 (H^s)")
a.semilogy(t, positive(col["y"]), "--", label="Y")
a.set_title("Sobolev norms")
a.legend()

a = ax[1][0]
a.plot(t, col["grad_u_inf"], label="sup |grad u|")
a.plot(t, col["sigma_holder"], label="sigma Holder proxy")
a.set_title("regularity monitors")
a.legend()

a = ax[1][1]
m0 = col["mass"][0] if rows else 0.0
a.plot(t, [m - m0 for m in col["mass"]], label="mass drift")
a.plot(t, col["momentum_x"], label="momentum x")
a.plot(t, col["momentum_y"], label="momentum y")
a.set_title("invariants")
a.legend()

for a in ax[1]:
    a.set_xlabel("t")
fig.tight_layout()
fig.savefig(PNG, dpi=120)
print(PNG)
"#;

fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Script text; `csv_name` is resolved relative to the script's directory
/// when no path is passed on the command line.
pub fn plot_script(csv_name: &str) -> String {
    let cols = format!(
        "[{}]",
        DiagnosticsRecord::COLUMNS
            .iter()
            .map(|c| py_str(c))
            .collect::<Vec<_>>()
            .join(", ")
    );
    TEMPLATE.replace("@CSV@", &py_str(csv_name)).replace("@COLUMNS@", &cols)
}

/// Writes `plot_<stem>.py` next to the CSV (or at `out`) and returns its path.
pub fn write_plot_script(csv: &Path, out: Option<&Path>) -> Result<std::path::PathBuf> {
    crate::io::read_timeseries(csv)?;
    let name = csv
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad csv path {}", csv.display())))?;
    let stem = csv.file_stem().and_then(|n| n.to_str()).unwrap_or("timeseries");
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => csv.with_file_name(format!("plot_{stem}.py")),
    };
    let rel = match (path.parent(), csv.parent()) {
        (Some(a), Some(b)) if a == b => name.to_string(),
        _ => std::path::absolute(csv)
            .map_err(|e| Error::io(csv, e))?
            .to_string_lossy()
            .into_owned(),
    };
    std::fs::write(&path, plot_script(&rel)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_embeds_header_and_csv_name() {
        let s = plot_script("run/timeseries.csv");
        assert!(s.contains("\"run/timeseries.csv\""));
        assert!(s.contains("\"sigma_holder\", \"bkm_integrand\""));
        assert!(!s.contains('@'));
    }
}
