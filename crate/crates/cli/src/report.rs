//! Markdown summary of the CSV artefacts in a directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::CliResult;

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> CliResult<Option<Csv>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return Err(format!("{}: empty CSV", path.display()).into());
    };
    let split = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
    Ok(Some(Csv {
        header: split(header),
        rows: lines.map(split).collect(),
    }))
}

fn table(out: &mut String, csv: &Csv) {
    let _ = writeln!(out, "| {} |", csv.header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(csv.header.len()));
    for row in &csv.rows {
        let cells: Vec<String> = row.iter().map(|c| short(c)).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out.push('\n');
}

/// Numbers rounded to four significant digits for display.
fn short(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(x) if cell.contains('.') || cell.contains('e') => format!("{:.4}", x)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string(),
        _ => cell.to_string(),
    }
}

/// Sections in display order: file, heading.
const SECTIONS: &[(&str, &str)] = &[
    ("stats.csv", "Dataset statistics"),
    ("srec_histogram.csv", "Singular-vector components against SProj"),
    ("srec_ks.csv", "Per-row KS statistics"),
    ("core_lemma.csv", "Perturbation magnitude against k"),
    ("row_norm.csv", "Row change against k"),
    ("global_norm.csv", "Global against row change"),
    ("dp_params.csv", "Privacy budget"),
    ("fkv_quality.csv", "Sketch fidelity"),
];

pub fn render(dir: &Path) -> CliResult<String> {
    let mut out = String::from("# Experiment report\n\n");
    let mut found = 0;
    for (file, heading) in SECTIONS {
        if let Some(csv) = read_csv(&dir.join(file))? {
            found += 1;
            let _ = writeln!(out, "## {heading}\n\nSource: `{file}`\n");
            table(&mut out, &csv);
        }
    }
    if let Some(csv) = read_csv(&dir.join("dp_violations.csv"))? {
        found += 1;
        let col = csv.header.iter().position(|h| h == "violated");
        let violated = col.map_or(0, |c| csv.rows.iter().filter(|r| r.get(c).is_some_and(|v| v != "0")).count());
        let _ = writeln!(
            out,
            "## Empirical privacy check\n\nSource: `dp_violations.csv`\n\n{} trials, {violated} with at least one violated product.\n",
            csv.rows.len()
        );
    }
    if let Some(csv) = read_csv(&dir.join("typicality.csv"))? {
        found += 1;
        let col = csv.header.iter().position(|h| h == "is_typical");
        let typical = col.map_or(0, |c| csv.rows.iter().filter(|r| r.get(c).is_some_and(|v| v == "1")).count());
        let _ = writeln!(
            out,
            "## Typicality\n\nSource: `typicality.csv`\n\n{typical} of {} users typical.\n",
            csv.rows.len()
        );
    }
    if found == 0 {
        return Err(format!("no experiment CSVs found in {}", dir.display()).into());
    }
    Ok(out)
}
