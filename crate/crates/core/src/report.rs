//! Output formats: CSV tables, JSON documents, SVG plots and run manifests.
//!
//! Numbers in CSV files carry 17 significant digits so that values round
//! trip exactly. JSON documents are produced from structs, whose fields
//! serialize in declaration order, and from `serde_json` maps, which keep
//! keys sorted; either way the key order is stable across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Comma-separated table with a header row.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn push(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// Parses a table produced by [`Self::render`], skipping `#` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty CSV"))?
            .split(',')
            .map(String::from)
            .collect::<Vec<_>>();
        let rows = lines
            .map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
            .collect::<Vec<_>>();
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(Error::invalid("ragged CSV row"));
        }
        Ok(Self { header, rows })
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: SeriesStyle,
    pub color: &'static str,
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        Self {
            label: label.into(),
            points,
            style: SeriesStyle::Line,
            color,
        }
    }

    pub fn markers(label: &str, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        Self {
            label: label.into(),
            points,
            style: SeriesStyle::Markers,
            color,
        }
    }
}

/// One set of axes.
#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Plot `log10(y)` (non-positive values are dropped).
    pub log_y: bool,
}

impl Panel {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Default::default()
        }
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn with_log_y(mut self) -> Self {
        self.log_y = true;
        self
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Panels side by side, drawn with polyline, circle, line and text
/// primitives only.
pub fn render_svg(panels: &[Panel]) -> String {
    let (pw, ph) = (420.0, 320.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let width = pw * panels.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{ph}" viewBox="0 0 {width} {ph}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{ph}" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let x0 = k as f64 * pw;
        let transform = |y: f64| if panel.log_y { y.log10() } else { y };
        let pts: Vec<(f64, f64)> = panel
            .series
            .iter()
            .flat_map(|se| se.points.iter().copied())
            .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!panel.log_y || y > 0.0))
            .map(|(x, y)| (x, transform(y)))
            .collect();
        let (mut xmin, mut xmax, mut ymin, mut ymax) = pts.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if pts.is_empty() {
            (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
        }
        if xmax - xmin < 1e-300 {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if ymax - ymin < 1e-12 * ymax.abs().max(1e-300) {
            let pad = 0.5 * ymax.abs().max(1e-3);
            ymin -= pad;
            ymax += pad;
        }
        let (l, r, t, b) = (x0 + ml, x0 + pw - mr, mt, ph - mb);
        let sx = |x: f64| l + (x - xmin) / (xmax - xmin) * (r - l);
        let sy = |y: f64| b - (y - ymin) / (ymax - ymin) * (b - t);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
            (l + r) / 2.0,
            esc(&panel.title)
        );
        let _ = writeln!(
            s,
            r#"<polyline points="{l:.1},{t:.1} {l:.1},{b:.1} {r:.1},{b:.1}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
            let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
            let ylab = if panel.log_y { format!("1e{fy:.1}") } else { tick_label(fy) };
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="black"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle">{4}</text>"#,
                sx(fx),
                b,
                b + 4.0,
                b + 16.0,
                esc(&tick_label(fx))
            );
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="black"/><text x="{3:.1}" y="{4:.1}" text-anchor="end">{5}</text>"#,
                l - 4.0,
                sy(fy),
                l,
                l - 6.0,
                sy(fy) + 4.0,
                esc(&ylab)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            ph - 12.0,
            esc(&panel.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{0:.1}" y="{1:.1}" text-anchor="middle" transform="rotate(-90 {0:.1} {1:.1})">{2}</text>"#,
            x0 + 16.0,
            (t + b) / 2.0,
            esc(&panel.y_label)
        );
        for (j, se) in panel.series.iter().enumerate() {
            let visible: Vec<(f64, f64)> = se
                .points
                .iter()
                .copied()
                .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!panel.log_y || y > 0.0))
                .map(|(x, y)| (sx(x), sy(transform(y))))
                .collect();
            match se.style {
                SeriesStyle::Line => {
                    let coords: Vec<String> = visible.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                        coords.join(" "),
                        se.color
                    );
                }
                SeriesStyle::Markers => {
                    for (x, y) in &visible {
                        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{}"/>"#, se.color);
                    }
                }
            }
            let ly = t + 6.0 + 14.0 * j as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="{3}" stroke-width="2"/><text x="{4:.1}" y="{5:.1}">{6}</text>"#,
                r - 130.0,
                ly,
                r - 115.0,
                se.color,
                r - 110.0,
                ly + 4.0,
                esc(&se.label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub operation: String,
    pub seconds: f64,
}

/// Record of one run: what was computed, how long it took, what was
/// written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub timings: Vec<Timing>,
    /// Every file written by the run, the manifest itself last (its own
    /// digest cannot be recorded and is left empty).
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Single writer for a run's output directory.
#[derive(Debug)]
pub struct ReportWriter {
    root: PathBuf,
    files: Vec<FileEntry>,
    timings: Vec<Timing>,
}

impl ReportWriter {
    pub fn new(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = to_json(value)?;
        self.write_text(name, &text)
    }

    /// Runs `f` and records its wall-clock time under `operation`.
    pub fn time<T>(&mut self, operation: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            operation: operation.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes the manifest and returns it.
    pub fn finish(mut self, command: &str, config_hash: &str, seed: u64, threads: usize) -> Result<RunManifest> {
        self.files.push(FileEntry {
            path: MANIFEST_NAME.to_string(),
            bytes: 0,
            sha256: String::new(),
        });
        let manifest = RunManifest {
            command: command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            seed,
            threads,
            timings: self.timings,
            files: self.files,
        };
        fs::write(self.root.join(MANIFEST_NAME), to_json(&manifest)?)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            let s = fmt_f64(x);
            let digits: String = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
            assert_eq!(digits.len(), 17);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.push_numbers(&[1.0, 2.0]);
        let back = CsvTable::parse(&t.render()).unwrap();
        assert_eq!(back.header, t.header);
        assert_eq!(back.rows, t.rows);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let p = Panel::new("t", "x", "y").with_series(Series::line("s", vec![(0.0, 1.0), (1.0, 2.0)], "black"));
        let svg = render_svg(&[p.clone(), p.with_log_y()]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
    }

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ReportWriter::new(dir.path()).unwrap();
        w.write_text("a.csv", "x\n1\n").unwrap();
        w.write_json("b.json", &vec![1, 2]).unwrap();
        let m = w.finish("test", "abc", 0, 1).unwrap();
        let on_disk: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        for f in on_disk {
            assert!(m.files.iter().any(|e| e.path == f));
        }
    }
}
