//! CSV helpers shared by reports and the command line runner.
//!
//! Numbers are written with Rust's shortest round-trip formatting so equal
//! values always produce equal bytes.

use crate::fock::FockBasis;
use crate::model::ModeGrid;

/// Square table with header `row,0,1,…,n−1`.
pub fn matrix_csv(n: usize, entry: impl Fn(usize, usize) -> f64) -> String {
    let mut out = String::from("row");
    for j in 0..n {
        out.push_str(&format!(",{j}"));
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&i.to_string());
        for j in 0..n {
            out.push_str(&format!(",{}", entry(i, j)));
        }
        out.push('\n');
    }
    out
}

/// Basis legend `index,total,occupation[,k_x,k_y,k_z]`; occupations are
/// space separated in mode order.
pub fn basis_legend_csv(basis: &FockBasis, grid: Option<&ModeGrid>) -> String {
    let k = grid.and_then(|g| basis.total_momenta(g).ok());
    let mut out = String::from("index,total,occupation");
    if k.is_some() {
        out.push_str(",k_x,k_y,k_z");
    }
    out.push('\n');
    for s in 0..basis.len() {
        let occ: Vec<String> = basis.state(s).iter().map(|n| n.to_string()).collect();
        out.push_str(&format!("{s},{},{}", basis.total(s), occ.join(" ")));
        if let Some(k) = &k {
            out.push_str(&format!(",{},{},{}", k[s][0], k[s][1], k[s][2]));
        }
        out.push('\n');
    }
    out
}

/// Rows of a table with the given header; cells are already formatted.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}
