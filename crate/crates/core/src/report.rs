//! CSV reports: a `#`-prefixed manifest, one row per ensemble, and an
//! optional fit section. Floats are printed with 17 significant digits
//! so a parsed report reproduces the original values bit for bit.
//!
//! The manifest records the invocation, never the environment: no
//! timestamps, no host names, no worker counts. Two runs of the same
//! command with the same seed must produce byte-identical files.

use std::fmt::Write as _;

use thiserror::Error;

/// Fixed data header.
pub const ENSEMBLE_HEADER: &str =
    "system,scheme,theta,h,T,n_paths,seed,functional,mean,stderr,exact,error,degenerate_fraction";

/// Fixed fit-section header.
pub const FIT_HEADER: &str = "scheme,theta,slope,intercept,r_squared,n_points";

/// Marker line that opens the fit section.
pub const FIT_MARKER: &str = "# fit";

/// One ensemble row. Optional cells are written empty: theta for
/// schemes without one, exact/error when no closed form is paired,
/// degenerate_fraction for non-trapezoidal schemes.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleRow {
    pub system: String,
    pub scheme: String,
    pub theta: Option<f64>,
    pub h: f64,
    pub t_final: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub functional: String,
    pub mean: f64,
    pub stderr: f64,
    pub exact: Option<f64>,
    pub error: Option<f64>,
    pub degenerate_fraction: Option<f64>,
}

/// One slope-fit row.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    pub scheme: String,
    pub theta: Option<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: u64,
}

/// A full report: manifest pairs (order preserved), data rows, fits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub manifest: Vec<(String, String)>,
    pub rows: Vec<EnsembleRow>,
    pub fits: Vec<FitRow>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// 17 significant digits; round-trips every finite f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn render_row(row: &EnsembleRow, out: &mut String) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.system,
        row.scheme,
        opt_float(row.theta),
        format_float(row.h),
        format_float(row.t_final),
        row.n_paths,
        row.seed,
        row.functional,
        format_float(row.mean),
        format_float(row.stderr),
        opt_float(row.exact),
        opt_float(row.error),
        opt_float(row.degenerate_fraction),
    );
}

fn render_fit(fit: &FitRow, out: &mut String) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        fit.scheme,
        opt_float(fit.theta),
        format_float(fit.slope),
        format_float(fit.intercept),
        format_float(fit.r_squared),
        fit.n_points,
    );
}

/// Renders the whole report as the on-disk text.
pub fn render_report(report: &Report) -> String {
    let mut out = String::new();
    for (k, v) in &report.manifest {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str(ENSEMBLE_HEADER);
    out.push('\n');
    for row in &report.rows {
        render_row(row, &mut out);
    }
    if !report.fits.is_empty() {
        out.push_str(FIT_MARKER);
        out.push('\n');
        out.push_str(FIT_HEADER);
        out.push('\n');
        for fit in &report.fits {
            render_fit(fit, &mut out);
        }
    }
    out
}

/// Writes the report to any sink.
pub fn write_report<W: std::io::Write>(mut w: W, report: &Report) -> std::io::Result<()> {
    w.write_all(render_report(report).as_bytes())
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64, ReportError> {
    field.parse().map_err(|_| ReportError::Malformed {
        line,
        message: format!("cannot parse {what} from {field:?}"),
    })
}

fn parse_opt_f64(field: &str, line: usize, what: &str) -> Result<Option<f64>, ReportError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, line, what).map(Some)
    }
}

fn parse_u64(field: &str, line: usize, what: &str) -> Result<u64, ReportError> {
    field.parse().map_err(|_| ReportError::Malformed {
        line,
        message: format!("cannot parse {what} from {field:?}"),
    })
}

/// Parses text produced by [`render_report`]. Inverse of rendering:
/// parse(render(r)) == r and render(parse(s)) == s.
pub fn parse_report(text: &str) -> Result<Report, ReportError> {
    let mut report = Report::default();
    let mut lines = text.lines().enumerate().peekable();

    while let Some(&(i, line)) = lines.peek() {
        if let Some(rest) = line.strip_prefix("# ") {
            if line == FIT_MARKER {
                break;
            }
            let (k, v) = rest
                .split_once(": ")
                .ok_or_else(|| ReportError::Malformed {
                    line: i + 1,
                    message: format!("manifest line without 'key: value': {line:?}"),
                })?;
            report.manifest.push((k.to_string(), v.to_string()));
            lines.next();
        } else {
            break;
        }
    }

    match lines.next() {
        Some((_, line)) if line == ENSEMBLE_HEADER => {}
        Some((i, line)) => {
            return Err(ReportError::Malformed {
                line: i + 1,
                message: format!("expected data header, found {line:?}"),
            })
        }
        None => {
            return Err(ReportError::Malformed {
                line: 0,
                message: "missing data header".into(),
            })
        }
    }

    let mut in_fits = false;
    let mut fit_header_seen = false;
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if line == FIT_MARKER {
            if in_fits {
                return Err(ReportError::Malformed {
                    line: lineno,
                    message: "duplicate fit marker".into(),
                });
            }
            in_fits = true;
            continue;
        }
        if in_fits && !fit_header_seen {
            if line != FIT_HEADER {
                return Err(ReportError::Malformed {
                    line: lineno,
                    message: format!("expected fit header, found {line:?}"),
                });
            }
            fit_header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if in_fits {
            if fields.len() != 6 {
                return Err(ReportError::Malformed {
                    line: lineno,
                    message: format!("fit row has {} fields, expected 6", fields.len()),
                });
            }
            report.fits.push(FitRow {
                scheme: fields[0].to_string(),
                theta: parse_opt_f64(fields[1], lineno, "theta")?,
                slope: parse_f64(fields[2], lineno, "slope")?,
                intercept: parse_f64(fields[3], lineno, "intercept")?,
                r_squared: parse_f64(fields[4], lineno, "r_squared")?,
                n_points: parse_u64(fields[5], lineno, "n_points")?,
            });
        } else {
            if fields.len() != 13 {
                return Err(ReportError::Malformed {
                    line: lineno,
                    message: format!("data row has {} fields, expected 13", fields.len()),
                });
            }
            report.rows.push(EnsembleRow {
                system: fields[0].to_string(),
                scheme: fields[1].to_string(),
                theta: parse_opt_f64(fields[2], lineno, "theta")?,
                h: parse_f64(fields[3], lineno, "h")?,
                t_final: parse_f64(fields[4], lineno, "T")?,
                n_paths: parse_u64(fields[5], lineno, "n_paths")?,
                seed: parse_u64(fields[6], lineno, "seed")?,
                functional: fields[7].to_string(),
                mean: parse_f64(fields[8], lineno, "mean")?,
                stderr: parse_f64(fields[9], lineno, "stderr")?,
                exact: parse_opt_f64(fields[10], lineno, "exact")?,
                error: parse_opt_f64(fields[11], lineno, "error")?,
                degenerate_fraction: parse_opt_f64(fields[12], lineno, "degenerate_fraction")?,
            });
        }
    }
    if in_fits && !fit_header_seen {
        return Err(ReportError::Malformed {
            line: 0,
            message: "fit marker without fit header".into(),
        });
    }
    Ok(report)
}
