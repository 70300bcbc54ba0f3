//! Training history as CSV. Floats use the shortest round-trip form, so
//! identical runs give byte-identical files.

use std::path::Path;

use denoise_core::train::HistoryRow;

use crate::error::{Error, Result};

pub const HEADER: &str = "iter,lr,loss,val_psnr,val_ssim";

pub fn to_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        let ssim = r.val_ssim.map_or(String::new(), |v| v.to_string());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter, r.lr, r.loss, r.val_psnr, ssim
        ));
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<HistoryRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(format!("expected header '{HEADER}'"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(format!("row {}: expected 5 fields", i + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("row {}: bad number '{s}'", i + 1));
            Ok(HistoryRow {
                iter: f[0]
                    .parse()
                    .map_err(|_| format!("row {}: bad iteration '{}'", i + 1, f[0]))?,
                lr: num(f[1])?,
                loss: num(f[2])?,
                val_psnr: num(f[3])?,
                val_ssim: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            })
        })
        .collect()
}

pub fn write(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    crate::model::write_bytes(path, to_csv(rows).as_bytes())
}

pub fn read(path: &Path) -> Result<Vec<HistoryRow>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    from_csv(&text).map_err(|m| Error::format(path, m))
}
