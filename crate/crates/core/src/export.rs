//! CSV, PNG and SVG writers for signals, spectrograms, tracks, refinement
//! artefacts and sweep reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::{ErrorRecord, ErrorReport, Estimate, FrameDiagnostics, Method};
use crate::refine::FinBranch;
use crate::signalgen::SampledSignal;
use crate::tfr::SpectrogramGrid;

pub fn write_signal_csv<W: Write>(mut w: W, signal: &SampledSignal) -> io::Result<()> {
    writeln!(w, "index,real,imag")?;
    for (n, s) in signal.samples.iter().enumerate() {
        writeln!(w, "{n},{},{}", s.re, s.im)?;
    }
    Ok(())
}

pub fn read_signal_csv<R: BufRead>(r: R, sample_rate: f64) -> Result<SampledSignal> {
    let mut samples = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Config(format!("signal CSV line {}: expected 3 columns", i + 1)));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("signal CSV line {}: {e}", i + 1)))
        };
        samples.push(crate::linalg::C64::new(parse(cols[1])?, parse(cols[2])?));
    }
    Ok(SampledSignal { samples, sample_rate })
}

pub fn write_spectrogram_csv<W: Write>(mut w: W, grid: &SpectrogramGrid) -> io::Result<()> {
    writeln!(w, "frame,bin,value")?;
    for n in 0..grid.frames {
        for (k, v) in grid.row(n).iter().enumerate() {
            writeln!(w, "{n},{k},{v}")?;
        }
    }
    Ok(())
}

/// Frames left to right, frequency bottom to top, 60 dB below the peak
/// mapped to black.
pub fn write_spectrogram_png(path: &Path, grid: &SpectrogramGrid) -> Result<()> {
    let peak = grid.values.iter().fold(0.0f64, |m, v| m.max(*v));
    let floor_db = -60.0;
    let img = image::GrayImage::from_fn(grid.frames as u32, grid.bins as u32, |x, y| {
        let k = grid.bins - 1 - y as usize;
        let v = grid.get(x as usize, k);
        let db = if peak > 0.0 && v > 0.0 { 10.0 * (v / peak).log10() } else { floor_db };
        let level = ((db.max(floor_db) - floor_db) / -floor_db * 255.0).round() as u8;
        image::Luma([level])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Io(io::Error::other(e.to_string())))
}

fn flag_string(parts: &[(&str, bool)]) -> String {
    let on: Vec<&str> = parts.iter().filter(|p| p.1).map(|p| p.0).collect();
    if on.is_empty() {
        "ok".into()
    } else {
        on.join(";")
    }
}

/// `frame, mode, freq_hz, amp, flags` for the tracked Prony estimates.
pub fn write_raw_tracks_csv<W: Write>(mut w: W, est: &Estimate) -> io::Result<()> {
    writeln!(w, "frame,mode,freq_hz,amp,flags")?;
    let frames = est.frame_estimates.len();
    for n in 0..frames {
        let fe = &est.frame_estimates[n];
        for m in &est.modes {
            let t = &m.track;
            let flags = flag_string(&[
                ("degenerate", t.degenerate[n]),
                ("outlier", m.refined.as_ref().map_or(false, |r| r.cleaned.outlier_mask[n]) && !t.degenerate[n]),
                ("nonconverged", !fe.flags.denoise_converged),
            ]);
            writeln!(w, "{n},{},{},{},{flags}", t.mode_index, t.values[n], t.amplitudes[n])?;
        }
    }
    Ok(())
}

/// `frame, mode, psi_hz`: the final estimate of every mode.
pub fn write_refined_csv<W: Write>(mut w: W, est: &Estimate) -> io::Result<()> {
    writeln!(w, "frame,mode,psi_hz")?;
    let frames = est.frame_estimates.len();
    for n in 0..frames {
        for m in &est.modes {
            writeln!(w, "{n},{},{}", m.track.mode_index, m.estimate[n])?;
        }
    }
    Ok(())
}

/// `mode, set, frame, cell, branch`. `cell`/`branch` are filled for `fin`
/// rows only.
pub fn write_point_sets_csv<W: Write>(mut w: W, est: &Estimate) -> io::Result<()> {
    writeln!(w, "mode,set,frame,cell,branch")?;
    for m in &est.modes {
        let Some(r) = &m.refined else { continue };
        let p = &r.points;
        let mode = m.track.mode_index;
        for (name, set) in [("min", &p.i_min), ("max", &p.i_max), ("if", &p.i_if), ("inf", &p.i_inf)] {
            for n in set {
                writeln!(w, "{mode},{name},{n},,")?;
            }
        }
        for n in &p.i_fin {
            let cell = p.q_intervals.iter().position(|&(lo, hi)| (lo..hi).contains(n));
            let (c, b) = match cell {
                Some(c) => (c.to_string(), p.branches[c].name()),
                None => (String::new(), ""),
            };
            writeln!(w, "{mode},fin,{n},{c},{b}")?;
        }
    }
    Ok(())
}

/// `mode, knot, t, value, second_deriv, penalty`.
pub fn write_spline_knots_csv<W: Write>(mut w: W, est: &Estimate) -> io::Result<()> {
    writeln!(w, "mode,knot,t,value,second_deriv,penalty")?;
    for m in &est.modes {
        let Some(r) = &m.refined else { continue };
        let s = &r.model;
        for i in 0..s.knots.len() {
            writeln!(
                w,
                "{},{i},{},{},{},{}",
                m.track.mode_index, s.knots[i], s.values[i], s.second_derivs[i], s.penalty
            )?;
        }
    }
    Ok(())
}

/// `frame, iterations, converged, sv_1 … sv_{P+1}, ratio`.
pub fn write_cadzow_csv<W: Write>(mut w: W, diags: &[FrameDiagnostics], order: usize) -> io::Result<()> {
    let mut header = String::from("frame,iterations,converged");
    for k in 1..=order + 1 {
        let _ = write!(header, ",sv_{k}");
    }
    header.push_str(",ratio");
    writeln!(w, "{header}")?;
    for d in diags {
        let mut line = format!("{},{},{}", d.frame, d.iterations, d.converged);
        for k in 0..=order {
            let _ = write!(line, ",{}", d.final_singular_values.get(k).copied().unwrap_or(f64::NAN));
        }
        let sv = &d.final_singular_values;
        let ratio = match (sv.get(order - 1), sv.get(order)) {
            (Some(a), Some(b)) if *a > 0.0 => b / a,
            _ => 0.0,
        };
        let _ = write!(line, ",{ratio}");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Which refinement branch each Q cell used, per mode: `mode, cell, lo, hi, branch`.
pub fn write_cells_csv<W: Write>(mut w: W, est: &Estimate) -> io::Result<()> {
    writeln!(w, "mode,cell,lo,hi,branch")?;
    for m in &est.modes {
        let Some(r) = &m.refined else { continue };
        for (c, (&(lo, hi), b)) in r.points.q_intervals.iter().zip(&r.points.branches).enumerate() {
            writeln!(w, "{},{c},{lo},{hi},{}", m.track.mode_index, b.name())?;
        }
    }
    Ok(())
}

pub const REPORT_HEADER: &str = "kind,method,sigma,snr_db,realization,mode,boundary_margin,error,status";

/// Long-format report: one `cell` row per (method, σ, realization, mode)
/// followed by one `mean` row per (method, σ, mode).
pub fn write_error_report_csv<W: Write>(mut w: W, report: &ErrorReport) -> io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in &report.records {
        let status = match &r.failure {
            None => "ok".to_string(),
            Some(f) => format!("failed: {}", f.replace([',', '\n'], " ")),
        };
        writeln!(
            w,
            "cell,{},{},{},{},{},{},{},{status}",
            r.method, r.sigma, r.snr_db, r.realization, r.mode, r.boundary_margin, r.error
        )?;
    }
    for m in report.means() {
        writeln!(
            w,
            "mean,{},{},{},,{},{},{},{}/{} ok",
            m.method, m.sigma, m.snr_db, m.mode, m.boundary_margin, m.mean, m.succeeded, m.realizations
        )?;
    }
    Ok(())
}

/// Reads the `cell` rows of a report written by [`write_error_report_csv`].
pub fn read_error_report_csv<R: BufRead>(r: R) -> Result<ErrorReport> {
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != REPORT_HEADER {
                return Err(Error::Config("not an error report CSV (header mismatch)".into()));
            }
            continue;
        }
        let cols: Vec<&str> = line.splitn(9, ',').collect();
        if cols.len() != 9 {
            return Err(Error::Config(format!("report line {}: expected 9 columns", i + 1)));
        }
        if cols[0] != "cell" {
            continue;
        }
        let bad = |what: &str| Error::Config(format!("report line {}: bad {what}", i + 1));
        let f = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let u = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(what));
        records.push(ErrorRecord {
            method: Method::from_name(cols[1])?,
            sigma: f(cols[2], "sigma")?,
            snr_db: f(cols[3], "snr_db")?,
            realization: u(cols[4], "realization")?,
            mode: u(cols[5], "mode")?,
            boundary_margin: u(cols[6], "boundary_margin")?,
            error: f(cols[7], "error")?,
            failure: if cols[8] == "ok" { None } else { Some(cols[8].trim_start_matches("failed: ").to_string()) },
        });
    }
    Ok(ErrorReport { records })
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const DASHES: [&str; 4] = ["", "6,3", "", "6,3"];

/// Mean error against σ, one panel per mode, one line per method, log
/// error axis.
pub fn error_plot_svg(report: &ErrorReport) -> String {
    let means = report.means();
    let mut modes: Vec<usize> = means.iter().map(|m| m.mode).collect();
    modes.sort_unstable();
    modes.dedup();
    let mut methods: Vec<Method> = means.iter().map(|m| m.method).collect();
    methods.sort();
    methods.dedup();
    let finite: Vec<&_> = means.iter().filter(|m| m.mean.is_finite() && m.mean > 0.0).collect();
    let (smin, smax) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| (a.min(m.sigma), b.max(m.sigma)));
    let (emin, emax) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| {
        (a.min(m.mean.log10()), b.max(m.mean.log10()))
    });
    let (smin, smax) = if smin < smax { (smin, smax) } else { (smin - 0.005, smin + 0.005) };
    let (emin, emax) = if emin.is_finite() && emin < emax {
        (emin.floor(), emax.ceil())
    } else if emin.is_finite() {
        (emin.floor() - 1.0, emin.ceil() + 1.0)
    } else {
        (-3.0, 0.0)
    };

    let (pw, ph, left, top, gap) = (360.0, 260.0, 60.0, 30.0, 40.0);
    let width = left + modes.len().max(1) as f64 * (pw + gap) + 120.0;
    let height = top + ph + 50.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (pi, mode) in modes.iter().enumerate() {
        let x0 = left + pi as f64 * (pw + gap);
        let sx = |s: f64| x0 + (s - smin) / (smax - smin) * pw;
        let sy = |e: f64| top + ph - (e.log10() - emin) / (emax - emin) * ph;
        let _ = writeln!(svg, r#"<rect x="{x0}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">mode {mode}</text>"#, x0 + pw / 2.0, top - 10.0);
        let mut d = emin as i32;
        while d as f64 <= emax {
            let y = top + ph - (d as f64 - emin) / (emax - emin) * ph;
            let _ = writeln!(svg, r##"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, x0 + pw);
            let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">1e{d}</text>"#, x0 - 4.0, y + 4.0);
            d += 1;
        }
        for i in 0..=4 {
            let s = smin + (smax - smin) * i as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#,
                sx(s),
                top + ph + 15.0,
                s
            );
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">σ (s)</text>"#, x0 + pw / 2.0, top + ph + 35.0);
        for (mi, method) in methods.iter().enumerate() {
            let pts: Vec<String> = means
                .iter()
                .filter(|m| m.mode == *mode && m.method == *method && m.mean.is_finite() && m.mean > 0.0)
                .map(|m| format!("{:.2},{:.2}", sx(m.sigma), sy(m.mean)))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let color = PALETTE[mi % PALETTE.len()];
            let dash = DASHES[mi % DASHES.len()];
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}" points="{}"/>"#,
                pts.join(" ")
            );
            for p in &pts {
                let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
            }
        }
    }
    let lx = left + modes.len().max(1) as f64 * (pw + gap);
    for (mi, method) in methods.iter().enumerate() {
        let y = top + 15.0 + mi as f64 * 18.0;
        let color = PALETTE[mi % PALETTE.len()];
        let dash = DASHES[mi % DASHES.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{method}</text>"#, lx + 25.0, y + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Counts of each refinement branch over all modes of an estimate.
pub fn branch_counts(est: &Estimate) -> [(FinBranch, usize); 3] {
    let mut out = [
        (FinBranch::InterferenceFree, 0),
        (FinBranch::Inflection, 0),
        (FinBranch::Midpoint, 0),
    ];
    for m in &est.modes {
        if let Some(r) = &m.refined {
            for b in &r.points.branches {
                for slot in out.iter_mut() {
                    if slot.0 == *b {
                        slot.1 += 1;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    #[test]
    fn signal_round_trip() {
        let s = SampledSignal {
            samples: vec![C64::new(0.1, -2.5), C64::new(1e-300, 3.0)],
            sample_rate: 2.0,
        };
        let mut buf = Vec::new();
        write_signal_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,real,imag\n0,0.1,-2.5\n"));
        let back = read_signal_csv(&buf[..], 2.0).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn report_round_trip_and_plot() {
        let rec = |m: Method, s: f64, r: usize, e: f64| ErrorRecord {
            method: m,
            sigma: s,
            snr_db: 10.0,
            realization: r,
            mode: 0,
            boundary_margin: 3,
            error: e,
            failure: None,
        };
        let mut report = ErrorReport {
            records: vec![
                rec(Method::Cad, 0.02, 0, 0.1),
                rec(Method::Cad, 0.03, 0, 0.05),
                rec(Method::CadSpline, 0.02, 0, 0.01),
                rec(Method::CadSpline, 0.03, 0, 0.002),
            ],
        };
        report.records.push(ErrorRecord {
            failure: Some("refine: mode 0: bad".into()),
            error: f64::NAN,
            ..rec(Method::CadSpline, 0.03, 1, 0.0)
        });
        let mut buf = Vec::new();
        write_error_report_csv(&mut buf, &report).unwrap();
        let back = read_error_report_csv(&buf[..]).unwrap();
        assert_eq!(back.records.len(), 5);
        assert_eq!(back.records[0], report.records[0]);
        assert!(back.records[4].failure.is_some());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("mean,cad-spline,0.03,10,,0,3,0.002,1/2 ok"));
        let svg = error_plot_svg(&back);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("cad-spline"));
    }
}
