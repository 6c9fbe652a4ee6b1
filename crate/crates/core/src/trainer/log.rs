use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::LossBreakdown;

pub const LOG_HEADER: &str = "iter,l_edge_fam,l_edge_psm,l_sis_fam,l_sis_psm,l_total";

/// CSV loss log. Values use shortest round-trip formatting so the file
/// reproduces the in-memory losses exactly.
pub struct LossLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LossLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut log = LossLog {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        writeln!(log.out, "{LOG_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(log)
    }

    /// Continue an existing log; a missing file is created with a header.
    pub fn append(path: &Path) -> Result<Self> {
        if !path.exists() {
            return LossLog::create(path);
        }
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(LossLog {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn row(iter: u64, l: &LossBreakdown) -> String {
        format!(
            "{iter},{},{},{},{},{}",
            l.l_edge_fam, l.l_edge_psm, l.l_sis_fam, l.l_sis_psm, l.l_total
        )
    }

    pub fn record(&mut self, iter: u64, l: &LossBreakdown) -> Result<()> {
        writeln!(self.out, "{}", Self::row(iter, l)).map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }

    /// Parse a log back into `(iter, breakdown)` rows.
    pub fn read(path: &Path) -> Result<Vec<(u64, LossBreakdown)>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::format(path, "missing loss log header"));
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let bad = || Error::format(path, format!("malformed row {}", i + 2));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 6 {
                    return Err(bad());
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
                Ok((
                    f[0].parse().map_err(|_| bad())?,
                    LossBreakdown {
                        l_edge_fam: num(f[1])?,
                        l_edge_psm: num(f[2])?,
                        l_sis_fam: num(f[3])?,
                        l_sis_psm: num(f[4])?,
                        l_total: num(f[5])?,
                    },
                ))
            })
            .collect()
    }
}
