use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocol::EvalReport;
use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub bleu1: f64,
    pub bleu4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub method: String,
    pub scores: Vec<SeedScore>,
}

fn mean(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count();
    if n == 0 {
        return f64::NAN;
    }
    v.sum::<f64>() / n as f64
}

/// Sample standard deviation; 0 for a single value.
fn std_dev(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v.clone());
    (v.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

impl TableRow {
    pub fn bleu1_mean(&self) -> f64 {
        mean(self.scores.iter().map(|s| s.bleu1))
    }

    pub fn bleu4_mean(&self) -> f64 {
        mean(self.scores.iter().map(|s| s.bleu4))
    }

    pub fn bleu1_std(&self) -> f64 {
        std_dev(self.scores.iter().map(|s| s.bleu1))
    }

    pub fn bleu4_std(&self) -> f64 {
        std_dev(self.scores.iter().map(|s| s.bleu4))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub title: String,
    pub rows: Vec<TableRow>,
}

const CSV_HEADER: &str = "label,method,seed,bleu1,bleu4";

impl ResultTable {
    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// One line per (row, seed). Values are raw BLEU in [0, 1], printed with
    /// shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            for s in &r.scores {
                writeln!(out, "{},{},{},{},{}", r.label, r.method, s.seed, s.bleu1, s.bleu4).expect("string write");
            }
        }
        out
    }

    pub fn from_csv(name: &str, title: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Parse { line: 1, message: "unexpected table header".into() });
        }
        let mut rows: Vec<TableRow> = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let parse_err = |m: &str| Error::Parse { line: i + 2, message: m.to_string() };
            if f.len() != 5 {
                return Err(parse_err("expected 5 fields"));
            }
            let score = SeedScore {
                seed: f[2].parse().map_err(|_| parse_err("bad seed"))?,
                bleu1: f[3].parse().map_err(|_| parse_err("bad bleu1"))?,
                bleu4: f[4].parse().map_err(|_| parse_err("bad bleu4"))?,
            };
            match rows.last_mut() {
                Some(r) if r.label == f[0] && r.method == f[1] => r.scores.push(score),
                _ => rows.push(TableRow {
                    label: f[0].to_string(),
                    method: f[1].to_string(),
                    scores: vec![score],
                }),
            }
        }
        Ok(Self {
            name: name.to_string(),
            title: title.to_string(),
            rows,
        })
    }

    fn to_markdown(&self) -> String {
        let mut out = format!("## {}\n\n| | method | seeds | BLEU1 | BLEU4 |\n|---|---|---|---|---|\n", self.title);
        for r in &self.rows {
            writeln!(
                out,
                "| {} | {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
                r.label,
                r.method,
                r.scores.len(),
                100.0 * r.bleu1_mean(),
                100.0 * r.bleu1_std(),
                100.0 * r.bleu4_mean(),
                100.0 * r.bleu4_std()
            )
            .expect("string write");
        }
        out
    }
}

/// Per-step scores of one method under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    pub method: String,
    pub seed: u64,
    pub bleu1: Vec<f64>,
    pub bleu4: Vec<f64>,
    pub count: Vec<usize>,
}

impl StepCurve {
    pub fn from_report(method: &str, seed: u64, r: &EvalReport) -> Self {
        Self {
            method: method.to_string(),
            seed,
            bleu1: r.per_step_bleu1.clone(),
            bleu4: r.per_step_bleu4.clone(),
            count: r.per_step_count.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitativeEntry {
    pub sample_id: u64,
    pub step: usize,
    pub reference: String,
    /// `(method, generated text)` in a fixed method order.
    pub generated: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub tables: Vec<ResultTable>,
    pub curves: Vec<StepCurve>,
    pub qualitative: Vec<QualitativeEntry>,
    /// Free-text lines appended to the summary (checks, settings).
    pub notes: Vec<String>,
}

impl ReportBundle {
    /// Mean per-step BLEU4 of one method across seeds.
    pub fn mean_curve(&self, method: &str) -> Vec<f64> {
        let curves: Vec<&StepCurve> = self.curves.iter().filter(|c| c.method == method).collect();
        let len = curves.iter().map(|c| c.bleu4.len()).max().unwrap_or(0);
        (0..len)
            .map(|i| mean(curves.iter().filter_map(|c| c.bleu4.get(i).copied())))
            .collect()
    }

    fn methods(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for c in &self.curves {
            if !seen.contains(&c.method) {
                seen.push(c.method.clone());
            }
        }
        seen
    }

    pub fn per_step_csv(&self) -> String {
        let mut out = String::from("method,seed,step,bleu1,bleu4,count\n");
        for c in &self.curves {
            for i in 0..c.bleu4.len() {
                writeln!(out, "{},{},{},{},{},{}", c.method, c.seed, i + 1, c.bleu1[i], c.bleu4[i], c.count[i])
                    .expect("string write");
            }
        }
        out
    }

    pub fn summary_markdown(&self) -> String {
        let mut out = String::from("# Results\n\nScores are corpus BLEU ×100 on the test split, mean ± sample std over seeds.\n\n");
        for t in &self.tables {
            out.push_str(&t.to_markdown());
            out.push('\n');
        }
        let methods = self.methods();
        if !methods.is_empty() {
            out.push_str("## Per-step BLEU4 (mean over seeds)\n\n| method |");
            let len = methods.iter().map(|m| self.mean_curve(m).len()).max().unwrap_or(0);
            for i in 1..=len {
                write!(out, " step {i} |").expect("string write");
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(len));
            out.push('\n');
            for m in &methods {
                write!(out, "| {m} |").expect("string write");
                for v in self.mean_curve(m) {
                    write!(out, " {:.2} |", 100.0 * v).expect("string write");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        if !self.notes.is_empty() {
            out.push_str("## Notes\n\n");
            for n in &self.notes {
                writeln!(out, "- {n}").expect("string write");
            }
        }
        out
    }

    pub fn qualitative_text(&self) -> String {
        let mut out = String::new();
        for q in &self.qualitative {
            writeln!(out, "sample {} step {}", q.sample_id, q.step).expect("string write");
            writeln!(out, "  reference: {}", q.reference).expect("string write");
            for (m, g) in &q.generated {
                writeln!(out, "  {m}: {g}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    /// Line plot of mean per-step BLEU4 per method.
    pub fn per_step_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const PAD: f64 = 56.0;
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let methods = self.methods();
        let curves: Vec<(String, Vec<f64>)> = methods.iter().map(|m| (m.clone(), self.mean_curve(m))).collect();
        let len = curves.iter().map(|c| c.1.len()).max().unwrap_or(1).max(1);
        let ymax = curves
            .iter()
            .flat_map(|c| c.1.iter().copied())
            .filter(|v| v.is_finite())
            .fold(0.0f64, f64::max)
            .max(1e-3)
            * 100.0
            * 1.1;
        let x = |i: usize| PAD + (W - 2.0 * PAD) * if len > 1 { i as f64 / (len - 1) as f64 } else { 0.5 };
        let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (100.0 * v / ymax);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
        );
        writeln!(
            s,
            "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/><line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>",
            b = H - PAD,
            r = W - PAD
        )
        .expect("string write");
        for i in 0..len {
            writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", x(i), H - PAD + 18.0, i + 1)
                .expect("string write");
        }
        for k in 0..=4 {
            let v = ymax * k as f64 / 4.0;
            writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.1}</text>",
                PAD - 6.0,
                y(v / 100.0) + 4.0
            )
            .expect("string write");
        }
        writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">anticipated step</text><text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\">BLEU4</text>",
            W / 2.0,
            H - 14.0,
            H / 2.0,
            H / 2.0
        )
        .expect("string write");
        for (ci, (m, c)) in curves.iter().enumerate() {
            let color = COLORS[ci % COLORS.len()];
            let pts: Vec<String> = c
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
                .collect();
            writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>", pts.join(" "))
                .expect("string write");
            writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{m}</text>",
                W - PAD - 120.0,
                PAD + 16.0 * ci as f64
            )
            .expect("string write");
        }
        s.push_str("</svg>\n");
        s
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(p, e))
}

/// Writes `<table>.csv` per table, `per_step.csv`, `per_step_bleu4.svg`,
/// `summary.md` and `qualitative.txt` into `dir`.
pub fn emit_report(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    if bundle.tables.is_empty() && bundle.curves.is_empty() {
        bail!(Input, "nothing to report");
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in &bundle.tables {
        write(dir, &format!("{}.csv", t.name), &t.to_csv())?;
    }
    write(dir, "per_step.csv", &bundle.per_step_csv())?;
    write(dir, "per_step_bleu4.svg", &bundle.per_step_svg())?;
    write(dir, "summary.md", &bundle.summary_markdown())?;
    write(dir, "qualitative.txt", &bundle.qualitative_text())?;
    Ok(())
}
