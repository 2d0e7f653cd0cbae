use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Per-epoch training record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,train_acc,val_acc";

/// Ten significant digits in scientific notation.
pub fn fmt_sig10(v: f64) -> String {
    format!("{v:.9e}")
}

impl TrainingHistory {
    pub fn push(&mut self, train_loss: f64, val_loss: f64, train_acc: f64, val_acc: f64) {
        self.train_loss.push(train_loss);
        self.val_loss.push(val_loss);
        self.train_acc.push(train_acc);
        self.val_acc.push(val_acc);
    }

    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.val_loss.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.val_loss.len();
        if self.train_loss.len() != n || self.train_acc.len() != n || self.val_acc.len() != n {
            return Err(invalid!("history columns have different lengths"));
        }
        Ok(())
    }

    /// Every value rounded to the ten significant digits `history.csv`
    /// keeps, so an in-memory history equals one read back from disk.
    pub fn quantized(&self) -> Self {
        let q = |v: &Vec<f64>| -> Vec<f64> {
            v.iter()
                .map(|x| fmt_sig10(*x).parse().expect("formatted float parses"))
                .collect()
        };
        Self {
            train_loss: q(&self.train_loss),
            val_loss: q(&self.val_loss),
            train_acc: q(&self.train_acc),
            val_acc: q(&self.val_acc),
        }
    }

    /// First `n` epochs.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            train_loss: self.train_loss[..n.min(self.train_loss.len())].to_vec(),
            val_loss: self.val_loss[..n.min(self.val_loss.len())].to_vec(),
            train_acc: self.train_acc[..n.min(self.train_acc.len())].to_vec(),
            val_acc: self.val_acc[..n.min(self.val_acc.len())].to_vec(),
        }
    }

    /// First epoch (0-based) whose validation loss is below `threshold`.
    pub fn first_epoch_below(&self, threshold: f64) -> Option<usize> {
        self.val_loss.iter().position(|&v| v < threshold)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for i in 0..self.epochs() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                fmt_sig10(self.train_loss[i]),
                fmt_sig10(self.val_loss[i]),
                fmt_sig10(self.train_acc[i]),
                fmt_sig10(self.val_acc[i]),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.validate()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>().join(",") != HISTORY_HEADER {
            return Err(Error::Format(format!("history header must be `{HISTORY_HEADER}`")));
        }
        let mut h = Self::default();
        for (row_no, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("history row {row_no}: bad column {i}")))
            };
            if num(0)? as usize != row_no {
                return Err(Error::Format(format!("history row {row_no}: epochs must count from 0")));
            }
            h.push(num(1)?, num(2)?, num(3)?, num(4)?);
        }
        Ok(h)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_to_ten_digits() {
        let mut h = TrainingHistory::default();
        h.push(0.612345678912345, 0.5, 0.51234567891234, 1.0);
        h.push(1e-5 / 3.0, 0.25, 0.75, 0.875);
        let back = TrainingHistory::from_csv(&h.to_csv()).unwrap();
        for (a, b) in h
            .train_loss
            .iter()
            .zip(&back.train_loss)
            .chain(h.train_acc.iter().zip(&back.train_acc))
        {
            assert!(((a - b) / a).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(back.val_loss, h.val_loss);
    }

    #[test]
    fn header_is_fixed() {
        assert!(TrainingHistory::from_csv("epoch,loss\n0,1\n").is_err());
        let h = TrainingHistory::default();
        assert_eq!(h.to_csv(), format!("{HISTORY_HEADER}\n"));
    }
}
