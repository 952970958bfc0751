//! CSV/JSON persistence.
//!
//! Every float is serialized with 17 significant digits (`{:.16e}`), enough
//! to round-trip an f64 exactly, with '.' decimals and '\n' line endings
//! regardless of locale. Rows are written in sample-index order, so a rerun
//! of the same config produces bitwise-identical files.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::prediction::Realization;
use crate::Result;

use super::config::ResolvedExperiment;
use super::experiment::{ExperimentOutput, SweepRow, TailRow};

/// 17 significant digits: 1 leading + 16 fractional mantissa digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:e}")
    }
}

/// Serializes to JSON with the 17-digit float convention.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(contents.as_bytes())?;
    Ok(())
}

pub const SAMPLES_HEADER: &str = "sample,seed,algorithm,w,cost_total,cost_tracking,\
cost_switching,cost_opt,cost_sta,regret,comp_diff,g1,g2";

fn samples_csv(out: &ExperimentOutput) -> String {
    let mut csv = String::with_capacity(128 * out.outcomes.len() + 128);
    csv.push_str(SAMPLES_HEADER);
    csv.push('\n');
    for outcome in &out.outcomes {
        for rec in &outcome.records {
            let w = rec.w.map(|w| w.to_string()).unwrap_or_default();
            let g1 = rec.g1.map(fmt_f64).unwrap_or_default();
            let g2 = rec.g2.map(fmt_f64).unwrap_or_default();
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                outcome.sample,
                outcome.seed,
                rec.name,
                w,
                fmt_f64(rec.cost.total()),
                fmt_f64(rec.cost.tracking),
                fmt_f64(rec.cost.switching),
                fmt_f64(rec.cost_opt),
                fmt_f64(rec.cost_sta),
                fmt_f64(rec.regret),
                fmt_f64(rec.comp_diff),
                g1,
                g2,
            ));
        }
    }
    csv
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    stats: &'a super::experiment::SummaryStats,
    bounds: &'a [crate::analysis::BoundReport],
}

/// Written file paths.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub samples: PathBuf,
    pub summary: PathBuf,
    pub config: PathBuf,
}

/// Writes `<prefix>.samples.csv`, `<prefix>.summary.json`, and
/// `<prefix>.config.json`.
pub fn write_outputs(
    out: &ExperimentOutput,
    resolved: &ResolvedExperiment,
    prefix: &str,
) -> Result<OutputPaths> {
    let paths = OutputPaths {
        samples: PathBuf::from(format!("{prefix}.samples.csv")),
        summary: PathBuf::from(format!("{prefix}.summary.json")),
        config: PathBuf::from(format!("{prefix}.config.json")),
    };
    write_file(&paths.samples, &samples_csv(out))?;
    let doc = SummaryDocument {
        stats: &out.summary,
        bounds: &out.bound_reports,
    };
    write_file(&paths.summary, &to_json_string(&doc)?)?;
    write_file(&paths.config, &to_json_string(&resolved.config)?)?;
    Ok(paths)
}

/// Writes `<prefix>.tail.csv` (empirical ccdf plus the two bounds).
pub fn write_tail(rows: &[TailRow], vt: f64, prefix: &str) -> Result<PathBuf> {
    let path = PathBuf::from(format!("{prefix}.tail.csv"));
    let mut csv = String::new();
    csv.push_str(&format!("# VT = {}\n", fmt_f64(vt)));
    csv.push_str("u,empirical,std_error,bound_two_term,bound_simplified\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(row.u),
            fmt_f64(row.empirical),
            fmt_f64(row.std_error),
            fmt_f64(row.bound_two_term),
            fmt_f64(row.bound_simplified),
        ));
    }
    write_file(&path, &csv)?;
    Ok(path)
}

/// Writes `<prefix>.sweep.csv` (V curve plus empirical curves per window).
pub fn write_sweep(rows: &[SweepRow], prefix: &str) -> Result<PathBuf> {
    let path = PathBuf::from(format!("{prefix}.sweep.csv"));
    let mut csv = String::from("w,V,mean_comp_diff,se_comp_diff,mean_regret,se_regret\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.w,
            fmt_f64(row.v),
            fmt_f64(row.mean_comp_diff),
            fmt_f64(row.se_comp_diff),
            fmt_f64(row.mean_regret),
            fmt_f64(row.se_regret),
        ));
    }
    write_file(&path, &csv)?;
    Ok(path)
}

#[derive(Serialize)]
struct RealizationDump<'a> {
    seed: u64,
    acceptance_rate: f64,
    y_hat: Vec<&'a [f64]>,
    innovations: Vec<&'a [f64]>,
    y: Vec<&'a [f64]>,
}

/// JSON dump of one realization (for the CLI `realize` subcommand).
pub fn realization_json(r: &Realization) -> Result<String> {
    let dump = RealizationDump {
        seed: r.seed,
        acceptance_rate: r.acceptance_rate,
        y_hat: r.y_hat.iter().map(|v| v.as_slice()).collect(),
        innovations: r.innovations.iter().map(|v| v.as_slice()).collect(),
        y: r.y.iter().map(|v| v.as_slice()).collect(),
    };
    to_json_string(&dump)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_17_digits_and_round_trips() {
        let cases = [
            0.0,
            1.0,
            -0.5,
            0.71875,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.7976931348623157e308,
            -9.869604401089358e-5,
        ];
        for v in cases {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn json_floats_use_scientific_form() {
        #[derive(Serialize)]
        struct S {
            x: f64,
        }
        let text = to_json_string(&S { x: 0.25 }).unwrap();
        assert_eq!(text, "{\"x\":2.5000000000000000e-1}");
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["x"].as_f64().unwrap(), 0.25);
    }

    #[test]
    fn header_matches_contract() {
        assert_eq!(
            SAMPLES_HEADER,
            "sample,seed,algorithm,w,cost_total,cost_tracking,cost_switching,\
cost_opt,cost_sta,regret,comp_diff,g1,g2"
        );
    }
}
