use std::collections::BTreeMap;
use std::fmt::Write;

use super::{median_wall, RunMetrics, Scheme};

pub const CSV_HEADER: &str = "workload,scheme,rep,wall_s,instr,g2h,h2g,fcp,grt,cov_total,cov_off,digest";

/// Rows sorted by workload, scheme and repetition.
pub fn to_csv(metrics: &[RunMetrics]) -> String {
    let mut rows: Vec<&RunMetrics> = metrics.iter().collect();
    rows.sort_by(|a, b| (&a.workload, a.scheme.rank(), a.rep).cmp(&(&b.workload, b.scheme.rank(), b.rep)));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for m in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{},{},{},{},{},{},{},{}",
            m.workload,
            m.scheme,
            m.rep,
            m.wall_s,
            m.interpreted_instructions,
            m.guest_to_host_calls,
            m.host_to_guest_callbacks,
            m.fcp_direct_calls,
            m.grt_constructions,
            m.coverage.total,
            m.coverage.offloaded,
            m.digest
        );
    }
    out
}

/// Geometric mean of positive finite values; `None` when there are none.
pub fn geomean(values: &[f64]) -> Option<f64> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite() && *x > 0.0).collect();
    if v.is_empty() {
        return None;
    }
    Some((v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp())
}

fn ratio(base: f64, x: f64) -> Option<f64> {
    (x > 0.0 && base > 0.0).then(|| base / x)
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |r| format!("{r:.2}x"))
}

/// Per-workload speedups against the emulated run, on wall-time and
/// instruction-count bases, then geometric means per scheme.
pub fn summary(metrics: &[RunMetrics]) -> String {
    let mut groups: BTreeMap<(&str, usize), Vec<&RunMetrics>> = BTreeMap::new();
    for m in metrics {
        groups.entry((m.workload.as_str(), m.scheme.rank())).or_default().push(m);
    }
    let mut out = String::new();
    out.push_str(
        "# Desk-scale trends only: instruction counts are the headline metric, wall time is informational.\n",
    );
    let _ = writeln!(
        out,
        "{:<16} {:<10} {:>12} {:>14} {:>10} {:>10} {:>10} {:>10} {:>8} {:>9} {:>9}",
        "workload", "scheme", "wall_s(med)", "instr", "g2h", "h2g", "fcp", "grt", "cov", "x_wall", "x_instr"
    );
    let mut per_scheme: BTreeMap<usize, (Scheme, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let workloads: Vec<&str> = {
        let mut w: Vec<&str> = groups.keys().map(|k| k.0).collect();
        w.dedup();
        w
    };
    for w in workloads {
        let base = groups.get(&(w, Scheme::Emulate.rank()));
        let base_wall = base.map(|ms| median_wall(ms).as_secs_f64());
        let base_instr = base.map(|ms| ms[0].interpreted_instructions as f64);
        for ((_, rank), ms) in groups.range((w, 0)..=(w, usize::MAX)) {
            let m = ms[0];
            let wall = median_wall(ms).as_secs_f64();
            let xw = base_wall.and_then(|b| ratio(b, wall));
            let xi = base_instr.and_then(|b| ratio(b, m.interpreted_instructions as f64));
            let e = per_scheme.entry(*rank).or_insert((m.scheme, Vec::new(), Vec::new()));
            e.1.extend(xw);
            e.2.extend(xi);
            let _ = writeln!(
                out,
                "{:<16} {:<10} {:>12.6} {:>14} {:>10} {:>10} {:>10} {:>10} {:>8} {:>9} {:>9}",
                w,
                m.scheme.name(),
                wall,
                m.interpreted_instructions,
                m.guest_to_host_calls,
                m.host_to_guest_callbacks,
                m.fcp_direct_calls,
                m.grt_constructions,
                format!("{}/{}", m.coverage.offloaded, m.coverage.total),
                fmt_ratio(xw),
                fmt_ratio(xi),
            );
        }
    }
    out.push_str("\ngeometric mean speedup vs qemu-like (wall, instr):\n");
    for (scheme, xw, xi) in per_scheme.values() {
        let _ = writeln!(out, "  {:<10} {:>9} {:>9}", scheme.name(), fmt_ratio(geomean(xw)), fmt_ratio(geomean(xi)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::Coverage;

    fn m(scheme: Scheme, instr: u64, wall: f64) -> RunMetrics {
        RunMetrics {
            workload: "w".into(),
            scheme,
            rep: 0,
            wall_s: wall,
            interpreted_instructions: instr,
            guest_to_host_calls: 1,
            host_to_guest_callbacks: 0,
            fcp_direct_calls: 0,
            grt_constructions: 0,
            coverage: Coverage { total: 3, offloaded: 1 },
            digest: "ab".into(),
            exit_code: 0,
            fault: None,
        }
    }

    #[test]
    fn geomean_of_two_and_eight() {
        assert!((geomean(&[2.0, 8.0]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(geomean(&[]), None);
    }

    #[test]
    fn six_schemes_give_six_rows() {
        let ms: Vec<RunMetrics> = Scheme::ALL.iter().rev().map(|&s| m(s, 100, 0.5)).collect();
        let csv = to_csv(&ms);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("w,native,0,"));
        assert!(lines[2].starts_with("w,qemu-like,0,"));
        let s = summary(&ms);
        assert!(s.contains("geometric mean"));
        assert_eq!(s.lines().filter(|l| l.starts_with("w ")).count(), 6);
    }

    #[test]
    fn speedups_are_relative_to_emulation() {
        let ms = vec![m(Scheme::Emulate, 800, 4.0), m(Scheme::GF, 100, 1.0), m(Scheme::GFP, 400, 1.0)];
        let s = summary(&ms);
        let gf = s.lines().find(|l| l.starts_with("w ") && l.contains(" gf ")).unwrap();
        assert!(gf.ends_with("4.00x     8.00x"), "{gf}");
        let mean = s.lines().find(|l| l.trim_start().starts_with("gfp")).unwrap();
        assert!(mean.contains("2.00x"), "{mean}");
    }
}
