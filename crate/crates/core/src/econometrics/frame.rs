//! Column store used by the estimators. Every column is `f64`; categorical
//! columns keep their labels and store the code (index into the sorted
//! distinct labels). Missing numeric values are `NaN`.

use std::collections::BTreeSet;
use std::io::Read;

use crate::error::{Error, Result};
use crate::panel::{FirmYearRow, WorkerYearRow};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    len: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Vec<Option<Vec<String>>>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn check_len(&mut self, name: &str, n: usize) -> Result<()> {
        if self.names.is_empty() {
            self.len = n;
        } else if n != self.len {
            return Err(Error::Data(format!(
                "column {name} has {n} rows, frame has {}",
                self.len
            )));
        }
        Ok(())
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Adds or replaces a numeric column.
    pub fn set_numeric(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        self.check_len(name, values.len())?;
        match self.position(name) {
            Some(i) => {
                self.columns[i] = values;
                self.labels[i] = None;
            }
            None => {
                self.names.push(name.to_string());
                self.columns.push(values);
                self.labels.push(None);
            }
        }
        Ok(())
    }

    /// Adds a categorical column coded by the sorted distinct labels.
    pub fn set_categorical<S: AsRef<str>>(&mut self, name: &str, values: &[S]) -> Result<()> {
        let labels: Vec<String> = values
            .iter()
            .map(|v| v.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let codes = values
            .iter()
            .map(|v| labels.binary_search_by(|l| l.as_str().cmp(v.as_ref())).unwrap() as f64)
            .collect();
        self.set_numeric(name, codes)?;
        let i = self.position(name).unwrap();
        self.labels[i] = Some(labels);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.position(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Data(format!("unknown column {name}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    /// Code of `label` in a categorical column, or the parsed number for a
    /// numeric column.
    pub fn code_of(&self, name: &str, label: &str) -> Result<f64> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::Data(format!("unknown column {name}")))?;
        match &self.labels[i] {
            Some(labels) => labels
                .iter()
                .position(|l| l == label)
                .map(|p| p as f64)
                .ok_or_else(|| Error::Data(format!("column {name} has no label {label}"))),
            None => label
                .parse()
                .map_err(|_| Error::Data(format!("column {name} is numeric; cannot match {label}"))),
        }
    }

    pub fn filter(&self, keep: &[bool]) -> Frame {
        assert_eq!(keep.len(), self.len);
        let columns: Vec<Vec<f64>> = self
            .columns
            .iter()
            .map(|c| c.iter().zip(keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect())
            .collect();
        Frame {
            len: keep.iter().filter(|k| **k).count(),
            names: self.names.clone(),
            columns,
            labels: self.labels.clone(),
        }
    }

    /// Rows reordered by `order` (a permutation or a selection).
    pub fn take(&self, order: &[usize]) -> Frame {
        Frame {
            len: order.len(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| order.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Reads a headered CSV. Columns whose non-empty cells all parse as
    /// numbers are numeric (empty cells become `NaN`); others are categorical.
    pub fn from_csv<R: Read>(reader: R) -> Result<Frame> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (i, cell) in rec.iter().enumerate() {
                raw[i].push(cell.to_string());
            }
        }
        let mut frame = Frame::new();
        for (name, cells) in headers.iter().zip(raw) {
            let parsed: Option<Vec<f64>> = cells
                .iter()
                .map(|c| if c.is_empty() { Some(f64::NAN) } else { c.parse().ok() })
                .collect();
            match parsed {
                Some(v) => frame.set_numeric(name, v)?,
                None => frame.set_categorical(name, &cells)?,
            }
        }
        Ok(frame)
    }

    pub fn from_firm_rows(rows: &[FirmYearRow]) -> Result<Frame> {
        let mut f = Frame::new();
        let num = |g: &dyn Fn(&FirmYearRow) -> f64| rows.iter().map(g).collect::<Vec<f64>>();
        f.set_numeric("firm_id", num(&|r| r.firm_id as f64))?;
        f.set_numeric("year", num(&|r| r.year as f64))?;
        f.set_numeric("sector_1d", num(&|r| r.sector_1d as f64))?;
        f.set_numeric("sector_5d", num(&|r| r.sector_5d as f64))?;
        f.set_numeric("sector_7d", num(&|r| r.sector_7d as f64))?;
        f.set_numeric("state", num(&|r| r.state as f64))?;
        f.set_numeric("cohort", num(&|r| r.cohort.map_or(f64::NAN, |c| c as f64)))?;
        f.set_numeric("eligible_now", num(&|r| r.eligible_now as f64))?;
        f.set_numeric("treated_now", num(&|r| r.treated_now as f64))?;
        f.set_numeric("log_employment", num(&|r| r.log_employment))?;
        f.set_numeric("log_avg_wage", num(&|r| r.log_avg_wage))?;
        f.set_numeric("hires", num(&|r| r.hires as f64))?;
        let sizes: Vec<&str> = rows.iter().map(|r| r.size_class.label()).collect();
        f.set_categorical("size_class", &sizes)?;
        f.set_numeric("firm_fe", num(&|r| r.firm_fe))?;
        f.set_numeric("payroll_tax_rate", num(&|r| r.payroll_tax_rate))?;
        f.set_numeric("log_labor_cost_wedge", num(&|r| r.log_labor_cost_wedge))?;
        Ok(f)
    }

    pub fn from_worker_rows(rows: &[WorkerYearRow]) -> Result<Frame> {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        if rows.is_empty() {
            return Ok(Frame::new());
        }
        Frame::from_csv(buf.as_slice())
    }
}

/// Dense group index (0-based, ordered by key) for the row tuples of `keys`.
pub fn group_ids(frame: &Frame, keys: &[String]) -> Result<(Vec<u32>, usize)> {
    let cols: Vec<&[f64]> = keys.iter().map(|k| frame.column(k)).collect::<Result<_>>()?;
    let n = frame.len();
    let mut order: Vec<usize> = (0..n).collect();
    let cmp = |a: usize, b: usize| {
        for c in &cols {
            let o = c[a].total_cmp(&c[b]);
            if o.is_ne() {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    };
    order.sort_by(|&a, &b| cmp(a, b));
    let mut ids = vec![0u32; n];
    let mut next = 0u32;
    for (pos, &row) in order.iter().enumerate() {
        if pos > 0 && cmp(order[pos - 1], row).is_ne() {
            next += 1;
        }
        ids[row] = next;
    }
    Ok((ids, if n == 0 { 0 } else { next as usize + 1 }))
}
