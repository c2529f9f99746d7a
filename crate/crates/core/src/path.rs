//! Discretized paths on a uniform time grid, with CSV serialization
//! (`t,x1,...,xd`, one row per grid node).

use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    t_end: f64,
    states: Vec<DVector<f64>>,
}

impl Path {
    pub fn new(t_end: f64, states: Vec<DVector<f64>>) -> Result<Self> {
        if !(t_end > 0.0) {
            return Err(Error::InvalidArgument("horizon T must be positive".into()));
        }
        if states.len() < 2 {
            return Err(Error::InvalidArgument("a path needs at least two grid nodes".into()));
        }
        let dim = states[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("path dimension must be positive".into()));
        }
        for s in &states {
            if s.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.len() });
            }
        }
        Ok(Self { t_end, states })
    }

    /// Straight line from `start` to `end` on `n_steps` intervals.
    pub fn straight_line(start: &DVector<f64>, end: &DVector<f64>, t_end: f64, n_steps: usize) -> Result<Self> {
        if end.len() != start.len() {
            return Err(Error::DimensionMismatch { expected: start.len(), got: end.len() });
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be positive".into()));
        }
        let states = (0..=n_steps)
            .map(|k| {
                let s = k as f64 / n_steps as f64;
                start * (1.0 - s) + end * s
            })
            .collect();
        Self::new(t_end, states)
    }

    /// Constant path at `state`.
    pub fn constant(state: &DVector<f64>, t_end: f64, n_steps: usize) -> Result<Self> {
        Self::new(t_end, vec![state.clone(); n_steps + 1])
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps() as f64
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.states
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Resample onto a uniform grid with `n_steps` intervals over the same
    /// horizon, by linear interpolation.
    pub fn resample(&self, n_steps: usize) -> Result<Path> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be positive".into()));
        }
        if n_steps == self.n_steps() {
            return Ok(self.clone());
        }
        let m = self.n_steps() as f64;
        let states = (0..=n_steps)
            .map(|k| {
                let s = k as f64 / n_steps as f64 * m;
                let i = (s.floor() as usize).min(self.n_steps() - 1);
                let w = s - i as f64;
                &self.states[i] * (1.0 - w) + &self.states[i + 1] * w
            })
            .collect();
        Path::new(self.t_end, states)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for j in 1..=self.dim() {
            write!(w, ",x{j}")?;
        }
        writeln!(w)?;
        for (k, s) in self.states.iter().enumerate() {
            write!(w, "{}", self.time(k))?;
            for v in s.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Path> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty path CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::InvalidArgument("path CSV header must be t,x1,...,xd".into()));
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::InvalidArgument(format!("row {} has {} fields, expected {}", i + 2, fields.len(), dim + 1)));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("cannot parse '{s}' in row {}", i + 2)))
            };
            times.push(parse(fields[0])?);
            states.push(DVector::from_iterator(
                dim,
                fields[1..].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?,
            ));
        }
        if times.len() < 2 {
            return Err(Error::InvalidArgument("path CSV needs at least two rows".into()));
        }
        let t_end = *times.last().unwrap();
        let dt = t_end / (times.len() - 1) as f64;
        for (k, &t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-9 * (1.0 + t_end) {
                return Err(Error::InvalidArgument("path CSV grid is not uniform".into()));
            }
        }
        Path::new(t_end, states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let states = vec![
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![0.25, -1.5]),
            DVector::from_vec(vec![1.0 / 3.0, 2.7182818284590452]),
        ];
        let path = Path::new(0.5, states).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let back = Path::read_csv(buf.as_slice()).unwrap();
        assert_eq!(path, back);
    }

    #[test]
    fn rejects_nonuniform_grid() {
        let csv = "t,x1\n0,0\n0.3,1\n1,2\n";
        assert!(Path::read_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn resample_linear_is_exact() {
        let start = DVector::from_vec(vec![0.0]);
        let end = DVector::from_vec(vec![1.0]);
        let path = Path::straight_line(&start, &end, 2.0, 10).unwrap();
        let fine = path.resample(40).unwrap();
        for (k, s) in fine.states().iter().enumerate() {
            let expected = k as f64 / 40.0;
            assert!((s[0] - expected).abs() < 1e-12);
        }
    }
}
