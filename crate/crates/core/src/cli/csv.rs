//! CSV output: scan rows and per-pulse dumps.
//!
//! Numbers are written with `{:.16e}` (17 significant digits) so values
//! round-trip exactly. Missing values are `nan`.

use std::io::Write;

use crate::scan::ScanRow;
use crate::simulate::SampleBatch;

pub const SCAN_HEADER: &str = "d_total_km,d_a_km,d_b_km,eps_a,eps_b,v_used,i_ab,eve_shannon,eve_holevo,key_rate,flags";
pub const PULSE_HEADER: &str = "q_a,p_a,q_b,p_b,q_hat,p_hat,q_recast,p_recast";

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Keeps a free-text field inside one CSV cell.
fn clean(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            ',' | '|' | '\n' | '\r' | '"' => ';',
            c => c,
        })
        .collect()
}

pub fn scan_row(r: &ScanRow) -> String {
    let (i_ab, es, eh, k) = match &r.rate {
        Some(p) => (p.mutual_info_ab, p.eve_shannon, p.eve_holevo, p.key_rate),
        None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    };
    let flags: Vec<String> = r.flags.iter().map(|f| clean(&f.to_string())).collect();
    [
        num(r.total_km),
        num(r.d_a_km),
        num(r.d_b_km),
        num(r.eps_a),
        num(r.eps_b),
        num(r.total_variance.unwrap_or(f64::NAN)),
        num(i_ab),
        num(es),
        num(eh),
        num(k),
        flags.join("|"),
    ]
    .join(",")
}

pub fn write_scan(w: &mut dyn Write, rows: &[ScanRow]) -> std::io::Result<()> {
    writeln!(w, "{SCAN_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", scan_row(r))?;
    }
    w.flush()
}

pub fn write_pulses(w: &mut dyn Write, b: &SampleBatch) -> std::io::Result<()> {
    writeln!(w, "{PULSE_HEADER}")?;
    for i in 0..b.count {
        let (qa, pa) = b.encodings_a[i];
        let (qb, pb) = b.encodings_b[i];
        let (qh, ph) = b.broadcast[i];
        let (qr, pr) = b.recast_b[i];
        let cells: Vec<String> = [qa, pa, qb, pb, qh, ph, qr, pr].iter().map(|&x| num(x)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}
