//! CSV writers. Column order is fixed, numbers use Rust's shortest
//! round-trip formatting with a `.` decimal separator.

use std::io::Write;

use alm_lqg::metrics::{AllocationReport, HedgeReport};
use alm_lqg::{PathSet, RiccatiSolution};

type CsvResult = Result<(), csv::Error>;

fn num(v: f64) -> String {
    format!("{v}")
}

/// `t, F00, F0_1..m, G0`, then `Ft_i_j` (i <= j), `Gt_1..m`, `g` when present.
pub fn write_riccati<W: Write>(out: W, sol: &RiccatiSolution) -> CsvResult {
    let m = sol.m();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "F00".into()];
    header.extend((1..=m).map(|j| format!("F0_{j}")));
    header.push("G0".into());
    let value = sol.f_tilde().zip(sol.g_tilde()).zip(sol.g());
    if value.is_some() {
        for i in 1..=m {
            header.extend((i..=m).map(|j| format!("Ft_{i}_{j}")));
        }
        header.extend((1..=m).map(|j| format!("Gt_{j}")));
        header.push("g".into());
    }
    w.write_record(&header)?;
    for (k, &t) in sol.grid().iter().enumerate() {
        let mut row = vec![num(t), num(sol.f00()[k])];
        row.extend(sol.f0()[k].iter().map(|&v| num(v)));
        row.push(num(sol.g0()[k]));
        if let Some(((ft, gt), g)) = value {
            for i in 0..m {
                row.extend((i..m).map(|j| num(ft[k][(i, j)])));
            }
            row.extend(gt[k].iter().map(|&v| num(v)));
            row.push(num(g[k]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per path and node.
pub fn write_paths<W: Write>(out: W, paths: &PathSet) -> CsvResult {
    let (n, m) = (paths.n(), paths.m());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path_id".to_string(), "t".into(), "S0".into()];
    header.extend((1..=n).map(|i| format!("S{i}")));
    header.extend((1..=m).map(|i| format!("Y{i}")));
    header.push("X".into());
    header.extend((1..=n).map(|i| format!("xi{i}")));
    header.push("money_account".into());
    w.write_record(&header)?;
    for p in 0..paths.len() {
        for (k, &t) in paths.grid().iter().enumerate() {
            let mut row = vec![p.to_string(), num(t), num(paths.riskfree()[k])];
            row.extend(paths.s(p, k).iter().map(|&v| num(v)));
            row.extend(paths.y(p, k).iter().map(|&v| num(v)));
            row.push(num(paths.x(p, k)));
            row.extend(paths.xi(p, k).iter().map(|&v| num(v)));
            row.push(num(paths.money_account(p, k)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, E_bar, benchmark_mean, relative_error, mean_xi1..n, mean_money_account`.
pub fn write_hedge_report<W: Write>(out: W, report: &HedgeReport) -> CsvResult {
    let n = report.mean_allocation.len().saturating_sub(1);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "t".to_string(),
        "E_bar".into(),
        "benchmark_mean".into(),
        "relative_error".into(),
    ];
    header.extend((1..=n).map(|i| format!("mean_xi{i}")));
    header.push("mean_money_account".into());
    w.write_record(&header)?;
    for (k, &t) in report.grid.iter().enumerate() {
        let mut row = vec![
            num(t),
            num(report.e_bar[k]),
            num(report.benchmark_mean[k]),
            num(report.relative_error[k]),
        ];
        row.extend(report.mean_allocation.iter().map(|s| num(s[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `t, series, mean, q10, q50, q90`; series `xi1..xin`, `money_account`.
pub fn write_allocations<W: Write>(out: W, report: &AllocationReport) -> CsvResult {
    let n = report.series() - 1;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "series", "mean", "q10", "q50", "q90"])?;
    for (k, &t) in report.grid.iter().enumerate() {
        for j in 0..report.series() {
            let name = if j < n { format!("xi{}", j + 1) } else { "money_account".into() };
            w.write_record([
                num(t),
                name,
                num(report.mean[j][k]),
                num(report.q10[j][k]),
                num(report.q50[j][k]),
                num(report.q90[j][k]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
