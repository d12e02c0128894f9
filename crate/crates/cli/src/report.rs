//! Convergence report over sweep rows.

use std::fmt::Write;

use crate::sweep::ResultRow;

/// `log(e₂/e₁) / log(ε₂/ε₁)` between consecutive successful rows.
fn slope(a: &ResultRow, b: &ResultRow) -> Option<f64> {
    let (ea, eb) = (a.error?, b.error?);
    (ea > 0.0 && eb > 0.0 && a.eps != b.eps).then(|| (eb / ea).ln() / (b.eps / a.eps).ln())
}

/// Least-squares slope of `log error` against `log ε` over rows with positive error.
pub fn fitted_slope(rows: &[ResultRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.error.filter(|&e| e > 0.0).map(|e| (r.eps.ln(), e.ln()))).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$e}")).unwrap_or_default()
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "",
    }
}

/// Error-vs-ε table, slopes, condition summary and failures as plain text.
pub fn report(rows: &[ResultRow]) -> String {
    let mut rows: Vec<&ResultRow> = rows.iter().collect();
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>10} {:>10} {:>12} {:>12} {:>12} {:>12} {:>7} {:>5} {:>5} {:>6}",
        "eps", "h", "kbar_11", "kstar_11", "error", "rel_error", "slope", "c1", "c2", "convex"
    );
    for (i, r) in rows.iter().enumerate() {
        let sl = if i == 0 { None } else { slope(rows[i - 1], r) };
        let _ = writeln!(
            s,
            "{:>10.5} {:>10.5} {:>12} {:>12} {:>12} {:>12} {:>7} {:>5} {:>5} {:>6}{}",
            r.eps,
            r.h_fine,
            opt(r.k11, 5),
            opt(r.kstar11, 5),
            opt(r.error, 3),
            opt(r.rel_error, 3),
            sl.map(|x| format!("{x:.2}")).unwrap_or_default(),
            flag(r.condition1),
            flag(r.condition2),
            flag(r.convex_probe),
            if r.under_resolved { "  under-resolved" } else { "" },
        );
    }
    let ok: Vec<ResultRow> = rows.iter().filter(|r| r.ok()).map(|r| (*r).clone()).collect();
    match fitted_slope(&ok) {
        Some(p) => {
            let _ = writeln!(s, "fitted log-log slope: {p:.3}");
        }
        None => {
            let _ = writeln!(s, "fitted log-log slope: n/a");
        }
    }
    let count = |f: fn(&ResultRow) -> Option<bool>| ok.iter().filter(|r| f(r) == Some(true)).count();
    let _ = writeln!(
        s,
        "conditions (empirical): condition1 {}/{}, condition2 {}/{}",
        count(|r| r.condition1),
        ok.len(),
        count(|r| r.condition2),
        ok.len()
    );
    for r in rows.iter().filter(|r| !r.ok()) {
        let _ = writeln!(s, "FAILED eps = {}: {}", r.eps, r.status);
    }
    s
}
