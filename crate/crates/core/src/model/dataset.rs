use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map of raw times onto `[0, 1]` given the raw domain `[a, b]`.
pub fn normalize_times(raw: &[f64], domain: (f64, f64)) -> Result<Vec<f64>> {
    let (a, b) = domain;
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(Error::DegenerateDomain { start: a, end: b });
    }
    raw.iter()
        .map(|&t| {
            if !t.is_finite() || t < a || t > b {
                Err(Error::TimeOutOfDomain { time: t, start: a, end: b })
            } else {
                Ok((t - a) / (b - a))
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One observation per time stamp.
    Paired,
    /// A block of observations per time stamp.
    Grouped,
}

/// A contiguous run of rows sharing one time stamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub time: f64,
    pub start: usize,
    pub end: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Time-stamped observations on the unit time domain.
///
/// Rows are stored row-major. Paired rows are sorted by time; grouped rows
/// are stored block by block in increasing block time.
#[derive(Clone, Debug)]
pub struct TimedDataset {
    d: usize,
    times: Vec<f64>,
    obs: Vec<f64>,
    blocks: Option<Vec<Block>>,
    raw_domain: (f64, f64),
}

fn check_rows(obs: &[f64], d: usize, n: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidInput("observation dimension must be positive".into()));
    }
    if obs.len() != n * d {
        return Err(Error::DimensionMismatch(format!(
            "{} observation values for {n} rows of dimension {d}",
            obs.len()
        )));
    }
    for (i, row) in obs.chunks_exact(d).enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "observations".into(), row: i });
        }
    }
    Ok(())
}

fn infer_domain(times: &[f64]) -> Result<(f64, f64)> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite time stamp".into()));
    }
    let lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateDomain { start: lo, end: hi });
    }
    Ok((lo, hi))
}

impl TimedDataset {
    /// Paired data from raw times and row-major observations. The raw domain
    /// defaults to `[min t, max t]`.
    pub fn paired(raw_times: &[f64], obs: Vec<f64>, d: usize, domain: Option<(f64, f64)>) -> Result<Self> {
        let n = raw_times.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no rows".into()));
        }
        check_rows(&obs, d, n)?;
        let domain = match domain {
            Some(dom) => dom,
            None => infer_domain(raw_times)?,
        };
        let unit = normalize_times(raw_times, domain)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| unit[a].total_cmp(&unit[b]));
        let mut times = Vec::with_capacity(n);
        let mut sorted = Vec::with_capacity(obs.len());
        for &i in &order {
            times.push(unit[i]);
            sorted.extend_from_slice(&obs[i * d..(i + 1) * d]);
        }
        Ok(Self { d, times, obs: sorted, blocks: None, raw_domain: domain })
    }

    /// Grouped data: one raw time per block and each block's rows row-major.
    pub fn grouped(
        raw_block_times: &[f64],
        block_obs: Vec<Vec<f64>>,
        d: usize,
        domain: Option<(f64, f64)>,
    ) -> Result<Self> {
        let m = raw_block_times.len();
        if m == 0 || block_obs.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} block times for {} blocks",
                block_obs.len()
            )));
        }
        if d == 0 {
            return Err(Error::InvalidInput("observation dimension must be positive".into()));
        }
        for (j, b) in block_obs.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::InvalidInput(format!("block {j} is empty")));
            }
            if b.len() % d != 0 {
                return Err(Error::DimensionMismatch(format!("block {j} rows are not of length {d}")));
            }
        }
        let domain = match domain {
            Some(dom) => dom,
            None => infer_domain(raw_block_times)?,
        };
        let unit = normalize_times(raw_block_times, domain)?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| unit[a].total_cmp(&unit[b]));
        for w in order.windows(2) {
            if unit[w[0]] == unit[w[1]] {
                return Err(Error::InvalidInput(format!(
                    "two blocks share the time stamp {}",
                    raw_block_times[w[0]]
                )));
            }
        }
        let mut times = Vec::new();
        let mut obs = Vec::new();
        let mut blocks = Vec::with_capacity(m);
        for &j in &order {
            let start = times.len();
            let rows = block_obs[j].len() / d;
            times.extend(std::iter::repeat(unit[j]).take(rows));
            obs.extend_from_slice(&block_obs[j]);
            blocks.push(Block { time: unit[j], start, end: start + rows });
        }
        check_rows(&obs, d, times.len())?;
        Ok(Self { d, times, obs, blocks: Some(blocks), raw_domain: domain })
    }

    pub fn layout(&self) -> Layout {
        if self.blocks.is_some() {
            Layout::Grouped
        } else {
            Layout::Paired
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_rows(&self) -> usize {
        self.times.len()
    }

    /// Normalized per-row times.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.d..(i + 1) * self.d]
    }

    /// Row-major observation storage.
    pub fn observations(&self) -> &[f64] {
        &self.obs
    }

    pub fn blocks(&self) -> Option<&[Block]> {
        self.blocks.as_deref()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.as_ref().map_or(self.n_rows(), |b| b.len())
    }

    pub fn raw_domain(&self) -> (f64, f64) {
        self.raw_domain
    }

    /// Map a unit time back to the raw time axis.
    pub fn to_raw_time(&self, t: f64) -> f64 {
        let (a, b) = self.raw_domain;
        a + t * (b - a)
    }

    /// A dataset of the same layout restricted to the selected rows. For
    /// grouped data, blocks left empty are dropped.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut keep = vec![false; self.n_rows()];
        for &r in rows {
            if r >= self.n_rows() {
                return Err(Error::InvalidInput(format!("row {r} out of range")));
            }
            keep[r] = true;
        }
        let mut times = Vec::new();
        let mut obs = Vec::new();
        let blocks = match &self.blocks {
            None => {
                for i in (0..self.n_rows()).filter(|&i| keep[i]) {
                    times.push(self.times[i]);
                    obs.extend_from_slice(self.row(i));
                }
                None
            }
            Some(blocks) => {
                let mut out = Vec::new();
                for b in blocks {
                    let start = times.len();
                    for i in (b.start..b.end).filter(|&i| keep[i]) {
                        times.push(self.times[i]);
                        obs.extend_from_slice(self.row(i));
                    }
                    if times.len() > start {
                        out.push(Block { time: b.time, start, end: times.len() });
                    }
                }
                Some(out)
            }
        };
        if times.is_empty() {
            return Err(Error::InvalidInput("row selection is empty".into()));
        }
        Ok(Self { d: self.d, times, obs, blocks, raw_domain: self.raw_domain })
    }

    pub(crate) fn from_unit_parts(
        d: usize,
        times: Vec<f64>,
        obs: Vec<f64>,
        blocks: Option<Vec<Block>>,
        raw_domain: (f64, f64),
    ) -> Self {
        Self { d, times, obs, blocks, raw_domain }
    }

    /// Write the dataset as CSV with header `t,x1,...,xd` and raw times.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.d).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = Vec::with_capacity(self.d + 1);
            rec.push(format!("{}", self.to_raw_time(self.times[i])));
            rec.extend(self.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a dataset CSV (`t,x1,...,xd`). With `layout = None` the layout is
    /// grouped when any time stamp repeats and paired otherwise.
    pub fn read_csv<R: Read>(reader: R, layout: Option<Layout>, domain: Option<(f64, f64)>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || headers.get(0) != Some("t") {
            return Err(Error::InvalidInput("CSV header must start with 't'".into()));
        }
        let d = headers.len() - 1;
        if d == 0 {
            return Err(Error::InvalidInput("CSV has no observation columns".into()));
        }
        let mut times = Vec::new();
        let mut obs = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "row {line} has {} fields, expected {}",
                    rec.len(),
                    d + 1
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("row {line}: cannot parse '{s}' as a number")))
            };
            let t = parse(&rec[0])?;
            if !t.is_finite() {
                return Err(Error::NonFinite { context: "time column".into(), row: line });
            }
            times.push(t);
            for v in rec.iter().skip(1) {
                let x = parse(v)?;
                if !x.is_finite() {
                    return Err(Error::NonFinite { context: "observations".into(), row: line });
                }
                obs.push(x);
            }
        }
        let layout = layout.unwrap_or_else(|| {
            let mut sorted = times.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                Layout::Grouped
            } else {
                Layout::Paired
            }
        });
        match layout {
            Layout::Paired => Self::paired(&times, obs, d, domain),
            Layout::Grouped => {
                let mut keys: Vec<f64> = Vec::new();
                let mut groups: Vec<Vec<f64>> = Vec::new();
                for (i, &t) in times.iter().enumerate() {
                    let pos = match keys.iter().position(|&k| k == t) {
                        Some(p) => p,
                        None => {
                            keys.push(t);
                            groups.push(Vec::new());
                            keys.len() - 1
                        }
                    };
                    groups[pos].extend_from_slice(&obs[i * d..(i + 1) * d]);
                }
                Self::grouped(&keys, groups, d, domain)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_times(&[10.0, 20.0, 30.0], (10.0, 30.0)).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_times(&[5.0], (0.0, 10.0)).unwrap(), vec![0.5]);
        assert_eq!(normalize_times(&[0.2, 0.8], (0.0, 1.0)).unwrap(), vec![0.2, 0.8]);
        assert!(matches!(normalize_times(&[1.0], (1.0, 1.0)), Err(Error::DegenerateDomain { .. })));
        assert!(matches!(normalize_times(&[2.0], (0.0, 1.0)), Err(Error::TimeOutOfDomain { .. })));
    }

    #[test]
    fn paired_rows_sorted() {
        let ds = TimedDataset::paired(&[3.0, 1.0, 2.0], vec![30.0, 10.0, 20.0], 1, None).unwrap();
        assert_eq!(ds.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(ds.observations(), &[10.0, 20.0, 30.0]);
        assert_eq!(ds.layout(), Layout::Paired);
    }

    #[test]
    fn non_finite_rejected() {
        let err = TimedDataset::paired(&[0.0, 1.0], vec![1.0, f64::NAN], 1, None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, .. }));
    }

    #[test]
    fn empty_block_rejected() {
        assert!(TimedDataset::grouped(&[0.0, 1.0], vec![vec![1.0], vec![]], 1, None).is_err());
    }

    #[test]
    fn csv_roundtrip_grouped() {
        let text = "t,x1,x2\n0,1,2\n0,3,4\n1,5,6\n0.5,7,8\n";
        let ds = TimedDataset::read_csv(text.as_bytes(), None, None).unwrap();
        assert_eq!(ds.layout(), Layout::Grouped);
        assert_eq!(ds.n_blocks(), 3);
        assert_eq!(ds.blocks().unwrap()[0].len(), 2);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = TimedDataset::read_csv(buf.as_slice(), None, None).unwrap();
        assert_eq!(back.observations(), ds.observations());
        assert_eq!(back.times(), ds.times());
    }

    #[test]
    fn csv_rejects_nan() {
        let text = "t,x1\n0,1\n1,nan\n";
        assert!(TimedDataset::read_csv(text.as_bytes(), None, None).is_err());
    }
}
