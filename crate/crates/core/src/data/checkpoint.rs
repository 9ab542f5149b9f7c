//! Stats-only snapshots of a clustering for warm starts on new data.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, then the family
//! (name, shape, scale hints), the resolved priors, the concentration and
//! its hyperprior, and per cluster its lock flag, member count and both
//! sufficient statistics. Vectors and strings carry a `u64` length prefix.
//! No raw items are stored, so the size depends only on the cluster count
//! and the dimensions.

use std::path::Path;

use crate::error::{Error, Result};
use crate::expfam::{
    BernoulliStats, BetaPrior, ComponentStats, DataPrior, DataStats, DiagGaussianStats, NigPrior,
    TransformPriorStats,
};
use crate::item::Shape;
use crate::jac::JacState;
use crate::model::Priors;
use crate::transforms::TransformFamily;

pub const MAGIC: &[u8; 8] = b"TDPMIXCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SavedCluster {
    pub stats: ComponentStats,
    pub members: u64,
    pub locked: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub family: String,
    pub shape: Shape,
    pub hints: Vec<f64>,
    pub priors: Priors,
    pub gamma: f64,
    pub gamma_prior: (f64, f64),
    pub clusters: Vec<SavedCluster>,
}

impl Checkpoint {
    pub fn from_state(state: &JacState, shape: Shape) -> Self {
        Self {
            family: state.family().name().to_string(),
            shape,
            hints: state.family().scale_hints(),
            priors: state.priors().clone(),
            gamma: state.gamma(),
            gamma_prior: state.gamma_prior(),
            clusters: state
                .clusters()
                .values()
                .map(|c| SavedCluster {
                    stats: c.stats().clone(),
                    members: c.members() as u64,
                    locked: c.locked(),
                })
                .collect(),
        }
    }

    /// Rebuilds the transformation family, including data-scaled hints.
    pub fn transform_family(&self) -> Result<TransformFamily> {
        let mut family = TransformFamily::from_name(&self.family, self.shape)?;
        if family.scale_hints() != self.hints {
            if let Some(&offset) = self.hints.last() {
                family = family.with_value_range(4.0 * offset);
            }
        }
        if family.scale_hints() != self.hints {
            return Err(Error::Checkpoint("scale hints do not match the family".into()));
        }
        Ok(family)
    }

    /// A state whose clusters carry the saved statistics and whose items are
    /// `items`, all unassigned until the next iteration.
    pub fn into_state(&self, items: Vec<Vec<f64>>, seed: u64) -> Result<JacState> {
        for x in &items {
            if x.len() != self.shape.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.shape.len(),
                    got: x.len(),
                });
            }
        }
        JacState::from_saved_clusters(
            items,
            self.transform_family()?,
            self.priors.clone(),
            self.clusters
                .iter()
                .map(|c| (c.stats.clone(), c.locked))
                .collect(),
            self.gamma,
            self.gamma_prior,
            seed,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.str(&self.family);
        match self.shape {
            Shape::Point2 => {
                w.u8(0);
                w.u64(0);
                w.u64(0);
            }
            Shape::Curve { len } => {
                w.u8(1);
                w.u64(len as u64);
                w.u64(0);
            }
            Shape::Image { width, height } => {
                w.u8(2);
                w.u64(width as u64);
                w.u64(height as u64);
            }
            Shape::Vector { len } => {
                w.u8(3);
                w.u64(len as u64);
                w.u64(0);
            }
        }
        w.f64s(&self.hints);
        match &self.priors.data {
            DataPrior::Bernoulli(p) => {
                w.u8(0);
                w.f64s(&p.a);
                w.f64s(&p.b);
            }
            DataPrior::Gaussian(p) => {
                w.u8(1);
                w.f64s(&p.mu0);
                w.f64(p.kappa0);
                w.f64(p.a0);
                w.f64(p.b0);
            }
        }
        w.f64(self.priors.transform_a);
        w.f64s(&self.priors.transform_b);
        w.f64(self.gamma);
        w.f64(self.gamma_prior.0);
        w.f64(self.gamma_prior.1);
        w.u64(self.clusters.len() as u64);
        for c in &self.clusters {
            w.u8(c.locked as u8);
            w.u64(c.members);
            match &c.stats.data {
                DataStats::Bernoulli(s) => {
                    w.u64(s.count());
                    w.f64s(s.ones());
                }
                DataStats::Gaussian(s) => {
                    w.u64(s.count());
                    w.f64s(s.sum());
                    w.f64s(s.sumsq());
                }
            }
            w.u64(c.stats.transform.count());
            w.f64s(c.stats.transform.sumsq());
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version}, expected {VERSION}"
            )));
        }
        let family = r.str()?;
        let tag = r.u8()?;
        let (a, b) = (r.len()?, r.len()?);
        let shape = match tag {
            0 => Shape::Point2,
            1 => Shape::Curve { len: a },
            2 => Shape::Image {
                width: a,
                height: b,
            },
            3 => Shape::Vector { len: a },
            t => return Err(Error::Checkpoint(format!("unknown shape tag {t}"))),
        };
        let hints = r.f64s()?;
        let data = match r.u8()? {
            0 => {
                let a = r.f64s()?;
                let b = r.f64s()?;
                check_len(b.len(), a.len())?;
                DataPrior::Bernoulli(BetaPrior { a, b })
            }
            1 => DataPrior::Gaussian(NigPrior {
                mu0: r.f64s()?,
                kappa0: r.f64()?,
                a0: r.f64()?,
                b0: r.f64()?,
            }),
            t => return Err(Error::Checkpoint(format!("unknown data prior tag {t}"))),
        };
        let priors = Priors {
            data,
            transform_a: r.f64()?,
            transform_b: r.f64s()?,
        };
        let gamma = r.f64()?;
        let gamma_prior = (r.f64()?, r.f64()?);
        let n = r.len()?;
        let mut clusters = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let locked = match r.u8()? {
                0 => false,
                1 => true,
                t => return Err(Error::Checkpoint(format!("bad lock flag {t}"))),
            };
            let members = r.u64()?;
            let data = match &priors.data {
                DataPrior::Bernoulli(p) => {
                    let count = r.u64()?;
                    let ones = r.f64s()?;
                    check_len(ones.len(), p.dim())?;
                    DataStats::Bernoulli(BernoulliStats::from_parts(count, ones, p.clone()))
                }
                DataPrior::Gaussian(p) => {
                    let count = r.u64()?;
                    let sum = r.f64s()?;
                    let sumsq = r.f64s()?;
                    check_len(sum.len(), p.mu0.len())?;
                    check_len(sumsq.len(), p.mu0.len())?;
                    DataStats::Gaussian(DiagGaussianStats::from_parts(count, sum, sumsq, p.clone()))
                }
            };
            let t_count = r.u64()?;
            let t_sumsq = r.f64s()?;
            check_len(t_sumsq.len(), priors.transform_b.len())?;
            let transform = TransformPriorStats::from_parts(
                t_count,
                t_sumsq,
                priors.transform_a,
                priors.transform_b.clone(),
            );
            clusters.push(SavedCluster {
                stats: ComponentStats::new(data, transform),
                members,
                locked,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            family,
            shape,
            hints,
            priors,
            gamma,
            gamma_prior,
            clusters,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Checkpoint(format!(
            "vector of length {got} where {expected} was expected"
        )));
    }
    Ok(())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// A length field, rejected if it cannot fit in the remaining bytes.
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if v > remaining.max(1 << 20) {
            return Err(Error::Checkpoint(format!("corrupt length field {v}")));
        }
        Ok(v as usize)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n.checked_mul(8).is_none_or(|b| b > remaining) {
            return Err(Error::Checkpoint(format!("corrupt length field {n}")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n > remaining {
            return Err(Error::Checkpoint(format!("corrupt length field {n}")));
        }
        String::from_utf8(self.take(n as usize)?.to_vec())
            .map_err(|_| Error::Checkpoint("family name is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DataModel, Hyperparams};

    fn state(n: usize) -> (JacState, Shape) {
        let items: Vec<Vec<f64>> = (0..n).map(|k| vec![k as f64, 1.0 - k as f64]).collect();
        let fam = TransformFamily::from_name("rotation2d", Shape::Point2).unwrap();
        let priors =
            Priors::resolve(&Hyperparams::default(), DataModel::Gaussian, &items, 2, &fam).unwrap();
        (
            JacState::new(items, fam, priors, 1.0, (1.0, 1.0), 3).unwrap(),
            Shape::Point2,
        )
    }

    #[test]
    fn bytes_round_trip() {
        let (s, shape) = state(7);
        let ck = Checkpoint::from_state(&s, shape);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn size_independent_of_items() {
        let a = Checkpoint::from_state(&state(5).0, Shape::Point2).to_bytes();
        let b = Checkpoint::from_state(&state(500).0, Shape::Point2).to_bytes();
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn corrupt_inputs() {
        let (s, shape) = state(3);
        let bytes = Checkpoint::from_state(&s, shape).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("version")));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
