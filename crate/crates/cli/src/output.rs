//! File output helpers. Numbers are written with Rust's shortest
//! round-trip formatting so identical values always give identical bytes.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_path(path)?;
    w.write_record(header.iter().map(|h| h.as_ref()))?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes a `rows x cols` matrix stored column-major with `rows` entries per column.
pub fn write_matrix(path: &Path, data: &[f64], rows: usize) -> Result<()> {
    let cols = data.len() / rows;
    let header: Vec<String> = (0..cols).map(|c| format!("c{c}")).collect();
    write_csv(
        path,
        &header,
        (0..rows).map(|r| (0..cols).map(|c| num(data[c * rows + r])).collect()),
    )
}

/// Minimal two-curve line plot.
pub fn svg_curves(title: &str, a: (&[f64], &[f64]), b: (&[f64], &[f64]), marks: &[f64]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 240.0;
    const PAD: f64 = 20.0;
    let xs = a.0.iter().chain(b.0);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let ymax = a.1.iter().chain(b.1).copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y / ymax * (H - 2.0 * PAD);
    let line = |(x, y): (&[f64], &[f64]), color: &str| {
        let pts: Vec<String> = x
            .iter()
            .zip(y)
            .map(|(&u, &v)| format!("{:.2},{:.2}", sx(u), sy(v)))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>\n",
            pts.join(" ")
        )
    };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">\n<text x=\"{PAD}\" y=\"14\" font-size=\"12\">{title}</text>\n"
    );
    out.push_str(&line(a, "blue"));
    out.push_str(&line(b, "red"));
    for &m in marks {
        let x = sx(m);
        out.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{PAD}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"gray\"/>\n",
            H - PAD
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, -2.0, 1e-300, 123456.789, 0.18242552380635635] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(-2.0), "-2");
    }

    #[test]
    fn svg_has_two_curves() {
        let x = [0.0, 1.0, 2.0];
        let y = [0.0, 1.0, 0.0];
        let s = svg_curves("t", (&x, &y), (&x, &y), &[1.0]);
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.starts_with("<svg"));
    }
}
